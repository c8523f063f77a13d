//! Command-line interface. Exit codes: 0 success, 1 fatal error, 2 partial
//! (some utterances failed and were excluded).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::bundle::validate_manifest;
use crate::config::{parse_cue_list, Config, Overrides, ScoringMode};
use crate::eval::{evaluate_run, load_annotations, reasoning_coverage, render_coverage, render_table, LabelSet};
use crate::fusion::{load_external_scores, ScoreTable};
use crate::llm::BackendKind;
use crate::pipeline::{
    self, fuse_with_external, load_lexicon, load_manifest, load_run_exclusions, load_run_tables, run_ablation,
    RunInputs, ScoringContext, REPORT_JSON_FILE, REPORT_TEXT_FILE, SCORES_FILE,
};

#[derive(Debug, Parser)]
#[command(name = "pronassess", version, about = "Zero-shot pronunciation assessment from textual speech cues")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a cue-bundle manifest and persist the run.
    Score(ScoreArgs),
    /// Correlate a persisted run with human labels.
    Evaluate(EvaluateArgs),
    /// Fuse a persisted run with an external model's scores.
    Fuse(FuseArgs),
    /// Evaluate a matrix of cue/scoring configurations.
    Ablate(AblateArgs),
    /// Schema-check cue-bundle manifests.
    Validate(ValidateArgs),
    /// Tally reasoning-category coverage from annotations.
    Coverage(CoverageArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Backend kind: mock, openai or gemini.
    #[arg(long)]
    pub backend: Option<BackendKind>,
    /// Comma-separated cues, e.g. `transcript,ipa,cmu`.
    #[arg(long)]
    pub cues: Option<String>,
    /// `basic`, `detailed`, or a path to a detailed guideline file.
    #[arg(long)]
    pub guideline: Option<String>,
    /// CMUdict-format lexicon replacing the bundled one.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Scoring mode: llm, full, ipa_match or cmu_match.
    #[arg(long)]
    pub mode: Option<ScoringMode>,
    /// Mock backend playback script.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self, runs_dir: Option<PathBuf>) -> Result<Config> {
        let overrides = Overrides {
            backend: self.backend,
            cues: self
                .cues
                .as_deref()
                .map(parse_cue_list)
                .transpose()
                .map_err(anyhow::Error::msg)?,
            guideline: self.guideline.clone(),
            lexicon: self.lexicon.clone(),
            mode: self.mode,
            mock_script: self.mock_script.clone(),
            workers: self.workers,
            runs_dir,
        };
        Ok(Config::layered(self.config.as_deref(), &overrides, std::env::vars())?)
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Human labels; when given, the run is evaluated too.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub external_scores: Option<PathBuf>,
    /// Directory that receives `<run_id>/`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// A run directory written by `score`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Label scale recorded in the report.
    #[arg(long, default_value = "unspecified")]
    pub scale: String,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub external_scores: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Directory for `ablation.json` and `ablation.txt`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long = "manifest", required = true)]
    pub manifests: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    /// Reasoning annotations, one JSON object per line.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Score(a) => score(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Fuse(a) => fuse(a),
        Command::Ablate(a) => ablate(a),
        Command::Validate(a) => validate(a),
        Command::Coverage(a) => coverage(a),
    }
}

fn score(args: ScoreArgs) -> Result<i32> {
    let config = args.config.resolve(args.out.clone())?;
    let inputs = RunInputs {
        manifest: args.manifest,
        labels: args.labels,
        external_scores: args.external_scores,
    };
    let run = pipeline::run_pipeline(&inputs, &config)?;
    println!("run {} -> {}", run.run_id, run.dir.display());
    println!(
        "scored {}, excluded {} ({} failed)",
        run.scored.records.len(),
        run.scored.exclusions.len(),
        run.scored.failures()
    );
    if !run.reports.is_empty() {
        print!("{}", render_table(&run.reports));
    }
    Ok(run.status.exit_code())
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn run_id_of(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn evaluate(args: EvaluateArgs) -> Result<i32> {
    let tables = load_run_tables(&args.run)?;
    let excluded = load_run_exclusions(&args.run)?.len();
    let labels = LabelSet::load(&args.labels, args.scale)?;
    let id = run_id_of(&args.run);
    let preds: Vec<ScoreTable> = tables.predictions.values().cloned().collect();
    let mut reports = vec![evaluate_run(&id, &preds, &labels, excluded)];
    if !tables.fused.is_empty() {
        let fused: Vec<ScoreTable> = tables.fused.values().cloned().collect();
        reports.push(evaluate_run(format!("{id}+external"), &fused, &labels, excluded));
    }
    write(&args.run.join(REPORT_JSON_FILE), &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    let table = render_table(&reports);
    write(&args.run.join(REPORT_TEXT_FILE), &table)?;
    print!("{table}");
    Ok(0)
}

fn fuse(args: FuseArgs) -> Result<i32> {
    let mut tables = load_run_tables(&args.run)?;
    let external = load_external_scores(&args.external_scores)?;
    tables.fused = fuse_with_external(&tables.predictions, &external)?;
    if tables.fused.is_empty() {
        bail!("external scores share no dimension with the run's predictions");
    }
    write(&args.run.join(SCORES_FILE), &(serde_json::to_string_pretty(&tables)? + "\n"))?;
    for (dim, t) in &tables.fused {
        println!("fused {dim}: {} utterances", t.len());
    }
    if let Some(labels) = args.labels {
        let labels = LabelSet::load(labels, "unspecified")?;
        let excluded = load_run_exclusions(&args.run)?.len();
        let fused: Vec<ScoreTable> = tables.fused.values().cloned().collect();
        let report = evaluate_run(format!("{}+external", run_id_of(&args.run)), &fused, &labels, excluded);
        print!("{}", render_table(&[report]));
    }
    Ok(0)
}

fn ablate(args: AblateArgs) -> Result<i32> {
    let config = args.config.resolve(None)?;
    let bundles = load_manifest(&args.manifest)?;
    let labels = LabelSet::load(&args.labels, &config.pipeline.label_scale)?;
    let lexicon = load_lexicon(&config)?;
    let rows = config.ablation_configs()?;
    let ctx = ScoringContext {
        lexicon: &lexicon,
        scheme: config.align,
        workers: config.pipeline.workers,
    };
    let reports = run_ablation(&bundles, &labels, &rows, Some(&config.backend), &ctx)?;
    let table = render_table(&reports);
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        write(&out.join("ablation.json"), &(serde_json::to_string_pretty(&reports)? + "\n"))?;
        write(&out.join("ablation.txt"), &table)?;
    }
    print!("{table}");
    Ok(0)
}

fn validate(args: ValidateArgs) -> Result<i32> {
    let mut bad = 0;
    for path in &args.manifests {
        let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let (bundles, issues) = validate_manifest(std::io::BufReader::new(file));
        for issue in &issues {
            let id = issue.utt_id.as_deref().unwrap_or("-");
            println!("{}:{}: [{id}] {}", path.display(), issue.line, issue.message);
        }
        println!("{}: {} valid, {} invalid", path.display(), bundles.len(), issues.len());
        bad += issues.len();
    }
    Ok(if bad == 0 { 0 } else { 1 })
}

fn coverage(args: CoverageArgs) -> Result<i32> {
    let annotations = load_annotations(&args.annotations)?;
    let report = reasoning_coverage(&annotations)?;
    let json = serde_json::to_string_pretty(&report)? + "\n";
    match &args.out {
        Some(path) => write(path, &json)?,
        None => print!("{json}"),
    }
    eprint!("{}", render_coverage(&report));
    Ok(0)
}
