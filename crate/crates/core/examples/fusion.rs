//! Normalize, refine and fuse score tables.

use pronassess::dimension::Dimension;
use pronassess::fusion::{fuse_models, min_max_normalize, refine_accuracy, ScoreTable};

fn table(dim: Dimension, rows: &[(&str, f64)]) -> ScoreTable {
    ScoreTable::from_entries(dim, rows.iter().map(|(k, v)| (k.to_string(), *v)))
}

fn show(label: &str, t: &ScoreTable) {
    let cells: Vec<String> = t.entries.iter().map(|(k, v)| format!("{k}={v:.3}")).collect();
    println!("{label:<10} {}", cells.join("  "));
}

fn main() {
    let llm = table(Dimension::Accuracy, &[("a", 2.0), ("b", 5.0), ("c", 3.0)]);
    let sim = table(Dimension::Accuracy, &[("a", 0.9), ("b", 0.4), ("c", 0.65)]);
    let external = table(Dimension::Accuracy, &[("a", 7.5), ("b", 8.0), ("c", 4.0)]);

    show("llm", &min_max_normalize(&llm).unwrap());
    show("match", &min_max_normalize(&sim).unwrap());
    let refined = refine_accuracy(&llm, &sim).unwrap();
    show("refined", &refined);
    show("fused", &fuse_models(&refined, &external).unwrap());
}
