//! Score the fixture manifest end to end and persist the run.
//!
//! Pass a directory to keep the run; otherwise a temporary one is used.

use pronassess::config::Config;
use pronassess::eval::render_table;
use pronassess::pipeline::{run_pipeline, RunInputs};

fn main() -> anyhow::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("pronassess-example"));
    let mut config = Config::load(dir.join("score.toml"))?;
    config.pipeline.runs_dir = out;
    let inputs = RunInputs {
        manifest: dir.join("manifest.jsonl"),
        labels: Some(dir.join("labels.jsonl")),
        external_scores: Some(dir.join("external_scores.jsonl")),
    };
    let run = run_pipeline(&inputs, &config)?;
    println!("run {} in {}", run.run_id, run.dir.display());
    println!("{} scored, {} excluded", run.scored.records.len(), run.scored.exclusions.len());
    print!("{}", render_table(&run.reports));
    Ok(())
}
