//! Local alignment between a canonical and a recognized phoneme sequence.

use pronassess::align::{match_similarity, smith_waterman, ScoringScheme};
use pronassess::phoneme::{tokenize_ipa, IpaMode};

fn main() {
    let scheme = ScoringScheme::default();
    let canonical = tokenize_ipa("m eɪ b iː", IpaMode::SpaceSeparated);
    let recognized = tokenize_ipa("m ɛ m b i", IpaMode::SpaceSeparated);
    let a: Vec<_> = canonical.iter().cloned().collect();
    let b: Vec<_> = recognized.iter().cloned().collect();

    let result = smith_waterman(&a, &b, &scheme);
    println!("score {}", result.score);
    for (i, j) in &result.aligned_pairs {
        let left = i.map(|i| a[i].symbol()).unwrap_or("-");
        let right = j.map(|j| b[j].symbol()).unwrap_or("-");
        println!("  {left:>3}  {right}");
    }
    let sim = match_similarity(&a, &b, &scheme).unwrap();
    println!("similarity {sim:.3}");
}
