//! Run the ablation matrix from the fixture config against the mock backend.

use pronassess::config::Config;
use pronassess::eval::{render_table, LabelSet};
use pronassess::pipeline::{load_lexicon, load_manifest, run_ablation, ScoringContext};

fn main() -> anyhow::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let config = Config::load(dir.join("ablation.toml"))?;
    let bundles = load_manifest(&dir.join("manifest.jsonl"))?;
    let labels = LabelSet::load(dir.join("labels.jsonl"), &config.pipeline.label_scale)?;
    let lexicon = load_lexicon(&config)?;
    let ctx = ScoringContext {
        lexicon: &lexicon,
        scheme: config.align,
        workers: config.pipeline.workers,
    };
    let reports = run_ablation(&bundles, &labels, &config.ablation_configs()?, Some(&config.backend), &ctx)?;
    print!("{}", render_table(&reports));
    Ok(())
}
