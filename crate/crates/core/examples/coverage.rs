//! Share of reasoning tokens per annotated category.

use pronassess::eval::{load_annotations, reasoning_coverage, render_coverage};

fn main() -> anyhow::Result<()> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/annotations.jsonl");
    let report = reasoning_coverage(&load_annotations(path)?)?;
    print!("{}", render_coverage(&report));
    Ok(())
}
