//! Inline pause notation in ARPABET strings.

use pronassess::phoneme::{parse_cmu_with_pauses, render_cmu_with_pauses};

fn main() {
    let raw = "SH IY1 (0.21s pause) W EH1 N T";
    let seq = parse_cmu_with_pauses(raw).unwrap();
    for t in seq.iter() {
        match t.pause_before_s() {
            Some(p) => println!("{:<4} after {p:.2}s pause", t.label()),
            None => println!("{}", t.label()),
        }
    }
    assert_eq!(render_cmu_with_pauses(&seq), raw);

    if let Err(e) = parse_cmu_with_pauses("D (soon pause) G") {
        println!("rejected: {e}");
    }
}
