//! End-to-end scoring: canonical mapping, match similarity, LLM assessment,
//! cross-utterance normalization, optional fusion and evaluation, and run
//! persistence under `runs/<run_id>/`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{info, warn};

use crate::align::{match_similarity, ScoringScheme};
use crate::bundle::{to_jsonl_string, validate_manifest, CueBundle};
use crate::config::{AblationConfig, Config, ScoringMode};
use crate::dimension::Dimension;
use crate::eval::{evaluate_run, render_table, EvalReport, LabelSet};
use crate::fusion::{external_tables, fuse_models, min_max_normalize, refine_accuracy, ExternalScore, FusionError, ScoreTable};
use crate::lexicon::{canonical_cmu, canonical_ipa, Lexicon, LexiconError};
use crate::llm::{assess_with_retry, BackendConfig, BackendKind, LlmClient, LlmError};
use crate::prompt::{AssessmentResult, PromptConfig, TEMPLATE_VERSION};

pub const CONFIG_FILE: &str = "config.json";
pub const ASSESSMENTS_FILE: &str = "assessments.jsonl";
pub const SCORES_FILE: &str = "scores.json";
pub const EXCLUSIONS_FILE: &str = "exclusions.jsonl";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const METADATA_FILE: &str = "metadata.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("manifest has {} problem(s); first: line {}: {}", .0.len(), .0[0].line, .0[0].message)]
    Manifest(Vec<crate::bundle::ManifestIssue>),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("{0}")]
    Input(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Shared, read-only inputs for a scoring pass.
#[derive(Debug, Clone, Copy)]
pub struct ScoringContext<'a> {
    pub lexicon: &'a Lexicon,
    pub scheme: ScoringScheme,
    pub workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionStage {
    /// Flagged unintelligible or empty transcript.
    Unintelligible,
    /// No canonical phonemes for a match-only mode.
    Canonical,
    /// Prompt could not be built from the bundle.
    Prompt,
    /// The backend gave no valid assessment.
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub utt_id: String,
    pub stage: ExclusionStage,
    pub reason: String,
}

impl Exclusion {
    /// Prompt and backend failures count as failures; degenerate input does not.
    pub fn is_failure(&self) -> bool {
        matches!(self.stage, ExclusionStage::Prompt | ExclusionStage::Llm)
    }
}

/// Match similarities for one bundle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchScores {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ipa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cmu: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub oov_words: Vec<String>,
}

/// Canonical phonemes from the transcript (or the bundle's own canonical
/// IPA) aligned against the recognized sequences.
pub fn match_scores(bundle: &CueBundle, lexicon: &Lexicon, scheme: &ScoringScheme) -> MatchScores {
    let mut out = MatchScores::default();
    let canonical = match &bundle.canonical_ipa {
        Some(seq) if !seq.is_empty() => Some(seq.clone()),
        _ => match canonical_ipa(&bundle.transcript, lexicon) {
            Ok((seq, report)) => {
                out.oov_words = report.oov_words.into_iter().map(|w| w.word).collect();
                Some(seq)
            }
            Err(crate::lexicon::G2pError::EmptyCanonical(report)) => {
                out.oov_words = report.oov_words.into_iter().map(|w| w.word).collect();
                None
            }
            Err(_) => None,
        },
    };
    if let Some(c) = canonical {
        out.ipa = match_similarity(&c.tokens, &bundle.ipa_recognized.tokens, scheme).ok();
    }
    if let Ok((c, _)) = canonical_cmu(&bundle.transcript, lexicon) {
        out.cmu = match_similarity(&c.tokens, &bundle.cmu_recognized.tokens, scheme).ok();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub utt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assessment: Option<AssessmentResult>,
    pub matches: MatchScores,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTables {
    /// Raw 1-5 LLM scores.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub llm: BTreeMap<Dimension, ScoreTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_ipa: Option<ScoreTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_cmu: Option<ScoreTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refined: Option<ScoreTable>,
    /// Normalized final predictions per dimension.
    pub predictions: BTreeMap<Dimension, ScoreTable>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fused: BTreeMap<Dimension, ScoreTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttemptStats {
    pub attempts: BTreeMap<String, u32>,
    pub latency_ms: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRun {
    pub mode: ScoringMode,
    pub records: Vec<UtteranceRecord>,
    pub exclusions: Vec<Exclusion>,
    pub stats: AttemptStats,
    pub tables: RunTables,
}

impl ScoredRun {
    pub fn failures(&self) -> usize {
        self.exclusions.iter().filter(|e| e.is_failure()).count()
    }
}

enum Outcome {
    Scored(UtteranceRecord, Option<(u32, u64)>),
    Excluded(Exclusion),
}

fn score_one(
    bundle: &CueBundle,
    mode: ScoringMode,
    prompt: Option<&PromptConfig>,
    client: Option<&LlmClient>,
    ctx: &ScoringContext<'_>,
) -> Result<Outcome, LlmError> {
    let exclude = |stage, reason: String| {
        Ok(Outcome::Excluded(Exclusion {
            utt_id: bundle.utt_id.clone(),
            stage,
            reason,
        }))
    };
    if bundle.unintelligible || bundle.transcript.trim().is_empty() {
        return exclude(ExclusionStage::Unintelligible, "no intelligible transcript".into());
    }
    let matches = match_scores(bundle, ctx.lexicon, &ctx.scheme);
    let needed = match mode {
        ScoringMode::IpaMatch => Some(matches.ipa),
        ScoringMode::CmuMatch => Some(matches.cmu),
        _ => None,
    };
    if needed == Some(None) {
        return exclude(ExclusionStage::Canonical, "no canonical phonemes for the transcript".into());
    }
    let (assessment, stats) = match (mode.uses_llm(), prompt, client) {
        (true, Some(prompt), Some(client)) => match assess_with_retry(bundle, prompt, client) {
            Ok(out) => (Some(out.result), Some((out.attempts, out.latency_ms))),
            Err(LlmError::Prompt(e)) => return exclude(ExclusionStage::Prompt, e.to_string()),
            Err(e @ (LlmError::Auth(_) | LlmError::Config(_))) => return Err(e),
            Err(e) => return exclude(ExclusionStage::Llm, e.to_string()),
        },
        (true, _, _) => return Err(LlmError::Config("LLM mode needs a prompt and a backend".into())),
        (false, _, _) => (None, None),
    };
    Ok(Outcome::Scored(
        UtteranceRecord {
            utt_id: bundle.utt_id.clone(),
            assessment,
            matches,
        },
        stats,
    ))
}

/// Scores every bundle on a worker pool, then builds the run's tables once
/// all utterances are done. Output order follows the input.
pub fn score_bundles(
    bundles: &[CueBundle],
    mode: ScoringMode,
    prompt: Option<&PromptConfig>,
    client: Option<&LlmClient>,
    ctx: &ScoringContext<'_>,
) -> Result<ScoredRun, PipelineError> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<Outcome, LlmError>>>> =
        Mutex::new((0..bundles.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..ctx.workers.clamp(1, bundles.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(bundle) = bundles.get(i) else { break };
                let outcome = score_one(bundle, mode, prompt, client, ctx);
                slots.lock().unwrap()[i] = Some(outcome);
            });
        }
    });

    let mut records = Vec::new();
    let mut exclusions = Vec::new();
    let mut stats = AttemptStats {
        attempts: BTreeMap::new(),
        latency_ms: BTreeMap::new(),
    };
    for slot in slots.into_inner().unwrap() {
        match slot.expect("every slot filled")? {
            Outcome::Scored(record, s) => {
                if let Some((attempts, latency)) = s {
                    stats.attempts.insert(record.utt_id.clone(), attempts);
                    stats.latency_ms.insert(record.utt_id.clone(), latency);
                }
                records.push(record);
            }
            Outcome::Excluded(e) => {
                warn!(utt_id = %e.utt_id, stage = ?e.stage, "excluded: {}", e.reason);
                exclusions.push(e);
            }
        }
    }
    let tables = build_tables(&records, mode, prompt)?;
    Ok(ScoredRun {
        mode,
        records,
        exclusions,
        stats,
        tables,
    })
}

fn build_tables(
    records: &[UtteranceRecord],
    mode: ScoringMode,
    prompt: Option<&PromptConfig>,
) -> Result<RunTables, FusionError> {
    let mut tables = RunTables::default();
    if mode.uses_llm() {
        for dim in prompt.map(|p| p.dimensions.clone()).unwrap_or_default() {
            let mut t = ScoreTable::new(dim, "llm score, 1-5");
            for r in records {
                if let Some(v) = r.assessment.as_ref().and_then(|a| a.score(dim)) {
                    t.insert(r.utt_id.clone(), v as f64);
                }
            }
            tables.llm.insert(dim, t);
        }
    }
    let mut ipa = ScoreTable::new(Dimension::Accuracy, "ipa match similarity, 0-1");
    let mut cmu = ScoreTable::new(Dimension::Accuracy, "cmu match similarity, 0-1");
    for r in records {
        if let Some(v) = r.matches.ipa {
            ipa.insert(r.utt_id.clone(), v);
        }
        if let Some(v) = r.matches.cmu {
            cmu.insert(r.utt_id.clone(), v);
        }
    }
    let normalized = |t: &ScoreTable| {
        if t.is_empty() {
            Ok(t.clone())
        } else {
            min_max_normalize(t)
        }
    };
    match mode {
        ScoringMode::Llm | ScoringMode::Full => {
            for (dim, t) in &tables.llm {
                tables.predictions.insert(*dim, normalized(t)?);
            }
            if mode == ScoringMode::Full {
                if let Some(llm_acc) = tables.llm.get(&Dimension::Accuracy).filter(|t| !t.is_empty()) {
                    let refined = refine_accuracy(llm_acc, &ipa)?;
                    tables.predictions.insert(Dimension::Accuracy, refined.clone());
                    tables.refined = Some(refined);
                }
            }
        }
        ScoringMode::IpaMatch => {
            tables.predictions.insert(Dimension::Accuracy, normalized(&ipa)?);
        }
        ScoringMode::CmuMatch => {
            tables.predictions.insert(Dimension::Accuracy, normalized(&cmu)?);
        }
    }
    tables.match_ipa = Some(ipa);
    tables.match_cmu = Some(cmu);
    Ok(tables)
}

/// Fuses each prediction table with the external model's table for the same
/// dimension. External rows for utterances outside the run are ignored; run
/// utterances missing from the external file are an error.
pub fn fuse_with_external(
    predictions: &BTreeMap<Dimension, ScoreTable>,
    external: &[ExternalScore],
) -> Result<BTreeMap<Dimension, ScoreTable>, FusionError> {
    let ext = external_tables(external);
    let mut fused = BTreeMap::new();
    for (dim, pred) in predictions {
        let Some(e) = ext.get(dim) else { continue };
        if pred.is_empty() {
            continue;
        }
        let e = e.restricted_to(pred.entries.keys().map(String::as_str));
        fused.insert(*dim, fuse_models(pred, &e)?);
    }
    Ok(fused)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Result<String, PipelineError> {
    Ok(sha256_hex(&std::fs::read(path).map_err(io_err(path))?))
}

/// Everything that determines a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub crate_version: String,
    pub template_version: String,
    pub config: Config,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt: Option<PromptConfig>,
    /// sha256 of each input file, keyed by role.
    pub inputs: BTreeMap<String, String>,
}

impl RunSnapshot {
    /// Content-addressed id: the first 16 hex digits of the snapshot's hash.
    pub fn run_id(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("snapshot serializes");
        sha256_hex(&bytes)[..16].to_string()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunInputs {
    pub manifest: PathBuf,
    pub labels: Option<PathBuf>,
    pub external_scores: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    Partial,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::Partial => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub run_id: String,
    pub dir: PathBuf,
    pub snapshot: RunSnapshot,
    pub scored: ScoredRun,
    pub reports: Vec<EvalReport>,
    pub status: RunStatus,
}

pub fn load_manifest(path: &Path) -> Result<Vec<CueBundle>, PipelineError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let (bundles, issues) = validate_manifest(std::io::BufReader::new(file));
    if !issues.is_empty() {
        return Err(PipelineError::Manifest(issues));
    }
    Ok(bundles)
}

pub fn load_lexicon(config: &Config) -> Result<std::borrow::Cow<'static, Lexicon>, PipelineError> {
    Ok(match &config.pipeline.lexicon {
        Some(path) => std::borrow::Cow::Owned(Lexicon::open(path)?),
        None => std::borrow::Cow::Borrowed(Lexicon::bundled()),
    })
}

fn client_for(backend: &BackendConfig, mode: ScoringMode) -> Result<Option<LlmClient>, PipelineError> {
    Ok(if mode.uses_llm() {
        Some(LlmClient::from_config(backend)?)
    } else {
        None
    })
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), PipelineError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(io_err(&path))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

#[derive(Debug, Serialize)]
struct RunMetadata<'a> {
    run_id: &'a str,
    status: RunStatus,
    backend_kind: BackendKind,
    model_name: &'a str,
    deterministic: bool,
    note: &'a str,
    utterances: usize,
    scored: usize,
    excluded: usize,
    failures: usize,
    total_attempts: u32,
    elapsed_ms: u64,
    finished_unix_s: u64,
    #[serde(flatten)]
    stats: &'a AttemptStats,
}

/// Runs the configured scoring mode over a manifest and persists the run.
pub fn run_pipeline(inputs: &RunInputs, config: &Config) -> Result<RunArtifacts, PipelineError> {
    let started = Instant::now();
    config.validate()?;
    let bundles = load_manifest(&inputs.manifest)?;
    let labels = match &inputs.labels {
        Some(p) => Some(LabelSet::load(p, &config.pipeline.label_scale).map_err(|e| PipelineError::Input(e.to_string()))?),
        None => None,
    };
    let external = match &inputs.external_scores {
        Some(p) => Some(crate::fusion::load_external_scores(p).map_err(|e| PipelineError::Input(e.to_string()))?),
        None => None,
    };
    let lexicon = load_lexicon(config)?;
    let mode = config.pipeline.mode;
    let prompt = if mode.uses_llm() {
        Some(config.prompt_config()?)
    } else {
        None
    };

    let mut snapshot_config = config.clone();
    snapshot_config.pipeline.runs_dir = PathBuf::new();
    let mut digests = BTreeMap::new();
    digests.insert("manifest".to_string(), file_digest(&inputs.manifest)?);
    if let Some(p) = &inputs.labels {
        digests.insert("labels".into(), file_digest(p)?);
    }
    if let Some(p) = &inputs.external_scores {
        digests.insert("external_scores".into(), file_digest(p)?);
    }
    if let Some(p) = &config.pipeline.lexicon {
        digests.insert("lexicon".into(), file_digest(p)?);
    }
    if let (BackendKind::Mock, Some(p)) = (config.backend.kind, &config.backend.mock_script) {
        digests.insert("mock_script".into(), file_digest(p)?);
    }
    let snapshot = RunSnapshot {
        crate_version: env!("CARGO_PKG_VERSION").into(),
        template_version: TEMPLATE_VERSION.into(),
        config: snapshot_config,
        prompt: prompt.clone(),
        inputs: digests,
    };
    let run_id = snapshot.run_id();
    let dir = config.pipeline.runs_dir.join(&run_id);
    if dir.exists() {
        info!(%run_id, "run directory exists; overwriting an identical run");
    }
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let client = client_for(&config.backend, mode)?;
    let ctx = ScoringContext {
        lexicon: &lexicon,
        scheme: config.align,
        workers: config.pipeline.workers,
    };
    let mut scored = score_bundles(&bundles, mode, prompt.as_ref(), client.as_ref(), &ctx)?;
    if let Some(ext) = &external {
        scored.tables.fused = fuse_with_external(&scored.tables.predictions, ext)?;
    }

    let mut reports = Vec::new();
    if let Some(labels) = &labels {
        let config_id = match &prompt {
            Some(p) => format!("{}:{}", mode.as_str(), p.id()),
            None => mode.as_str().to_string(),
        };
        let excluded = scored.exclusions.len();
        let preds: Vec<ScoreTable> = scored.tables.predictions.values().cloned().collect();
        reports.push(evaluate_run(&config_id, &preds, labels, excluded));
        if !scored.tables.fused.is_empty() {
            let fused: Vec<ScoreTable> = scored.tables.fused.values().cloned().collect();
            reports.push(evaluate_run(format!("{config_id}+external"), &fused, labels, excluded));
        }
    }

    let status = if scored.failures() > 0 {
        RunStatus::Partial
    } else {
        RunStatus::Success
    };
    write_file(&dir, CONFIG_FILE, &pretty(&snapshot))?;
    write_file(&dir, ASSESSMENTS_FILE, &to_jsonl_string(&scored.records))?;
    write_file(&dir, SCORES_FILE, &pretty(&scored.tables))?;
    write_file(&dir, EXCLUSIONS_FILE, &to_jsonl_string(&scored.exclusions))?;
    if labels.is_some() {
        write_file(&dir, REPORT_JSON_FILE, &pretty(&reports))?;
        write_file(&dir, REPORT_TEXT_FILE, &render_table(&reports))?;
    }
    let metadata = RunMetadata {
        run_id: &run_id,
        status,
        backend_kind: config.backend.kind,
        model_name: &config.backend.model_name,
        deterministic: config.backend.kind == BackendKind::Mock || !mode.uses_llm(),
        note: if config.backend.kind == BackendKind::Mock || !mode.uses_llm() {
            "mock or match-only run: outputs are reproducible"
        } else {
            "live backend with default sampling settings: scores may vary across runs"
        },
        utterances: bundles.len(),
        scored: scored.records.len(),
        excluded: scored.exclusions.len(),
        failures: scored.failures(),
        total_attempts: scored.stats.attempts.values().sum(),
        elapsed_ms: started.elapsed().as_millis() as u64,
        finished_unix_s: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        stats: &scored.stats,
    };
    write_file(&dir, METADATA_FILE, &pretty(&metadata))?;
    info!(%run_id, dir = %dir.display(), "run persisted");

    Ok(RunArtifacts {
        run_id,
        dir,
        snapshot,
        scored,
        reports,
        status,
    })
}

/// Reads the score tables of a persisted run.
pub fn load_run_tables(run_dir: &Path) -> Result<RunTables, PipelineError> {
    let path = run_dir.join(SCORES_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

pub fn load_run_exclusions(run_dir: &Path) -> Result<Vec<Exclusion>, PipelineError> {
    let path = run_dir.join(EXCLUSIONS_FILE);
    crate::bundle::read_jsonl_file(&path).map_err(|e| PipelineError::Input(e.to_string()))
}

/// Scores the bundles once per ablation row and evaluates each against the
/// labels. Match-only rows never touch the backend; LLM rows each get a
/// fresh client.
pub fn run_ablation(
    bundles: &[CueBundle],
    labels: &LabelSet,
    configs: &[AblationConfig],
    backend: Option<&BackendConfig>,
    ctx: &ScoringContext<'_>,
) -> Result<Vec<EvalReport>, PipelineError> {
    let mut reports = Vec::with_capacity(configs.len());
    for config in configs {
        let client = match (config.mode.uses_llm(), backend) {
            (true, Some(b)) => client_for(b, config.mode)?,
            (true, None) => {
                return Err(PipelineError::Input(format!(
                    "ablation row `{}` needs a backend",
                    config.name
                )))
            }
            (false, _) => None,
        };
        let scored = score_bundles(bundles, config.mode, config.prompt.as_ref(), client.as_ref(), ctx)?;
        let preds: Vec<ScoreTable> = scored.tables.predictions.values().cloned().collect();
        reports.push(evaluate_run(&config.name, &preds, labels, scored.exclusions.len()));
    }
    Ok(reports)
}
