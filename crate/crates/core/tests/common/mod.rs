#![allow(dead_code)]

use std::path::PathBuf;

use pronassess::bundle::{read_jsonl_file, CueBundle};
use pronassess::prompt::{Cue, PromptConfig};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn manifest() -> Vec<CueBundle> {
    read_jsonl_file(fixture("manifest.jsonl")).unwrap()
}

/// Every cue subset crossed with both guidelines, named as the golden files.
pub fn configs() -> Vec<(String, PromptConfig)> {
    use Cue::*;
    let detailed = std::fs::read_to_string(fixture("guideline_detailed.txt")).unwrap();
    let subsets: [(&str, &[Cue]); 5] = [
        ("transcript", &[Transcript]),
        ("transcript_ipa", &[Transcript, Ipa]),
        ("transcript_cmu", &[Transcript, Cmu]),
        ("all", &[Transcript, Ipa, Cmu]),
        ("all_tobi", &[Transcript, Ipa, Cmu, Tobi]),
    ];
    let mut out = Vec::new();
    for (name, cues) in subsets {
        for guideline in ["basic", "detailed"] {
            let mut config = PromptConfig::new(cues.iter().copied());
            if guideline == "detailed" {
                config = config.detailed(detailed.clone());
            }
            if cues.contains(&Tobi) {
                config = config.with_prosody();
            }
            out.push((format!("{name}_{guideline}"), config));
        }
    }
    out
}

/// The fixture utterance used for golden prompts; it carries a ToBI cue.
pub fn golden_bundle() -> CueBundle {
    manifest().into_iter().find(|b| b.utt_id == "u08").unwrap()
}
