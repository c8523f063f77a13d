//! Render the assessment prompt for one bundle under two cue configurations.

use pronassess::bundle::{read_jsonl_file, CueBundle};
use pronassess::prompt::{build_prompt, Cue, PromptConfig};

fn main() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let bundles: Vec<CueBundle> = read_jsonl_file(dir.join("manifest.jsonl")).unwrap();
    let bundle = bundles.iter().find(|b| b.utt_id == "u08").unwrap();

    let basic = PromptConfig::new([Cue::Transcript, Cue::Ipa]);
    println!("--- {} ---\n{}", basic.id(), build_prompt(bundle, &basic).unwrap());

    let guideline = std::fs::read_to_string(dir.join("guideline_detailed.txt")).unwrap();
    let full = PromptConfig::all_cues().detailed(guideline).with_prosody();
    println!("--- {} ---\n{}", full.id(), build_prompt(bundle, &full).unwrap());
}
