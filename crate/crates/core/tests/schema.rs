use std::collections::BTreeSet;
use std::path::PathBuf;

use proptest::prelude::*;
use pronassess::bundle::{read_jsonl_file, CueBundle};
use pronassess::phoneme::{parse_cmu_with_pauses, tokenize_ipa, IpaMode, render_cmu_with_pauses, CmuSequence, CmuToken, ARPABET_PHONES};
use pronassess::prompt::{TobiAnnotation, TobiEvent};
use regex::Regex;
use serde_json::Value;

fn schema() -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schema/cue_bundle.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn keys(v: &Value) -> BTreeSet<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

fn strings(v: &Value) -> BTreeSet<String> {
    v.as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect()
}

fn full_bundle() -> CueBundle {
    let mut b = CueBundle::new("u1", "maybe");
    b.ipa_recognized = tokenize_ipa("m ɛ m b i", IpaMode::SpaceSeparated);
    b.cmu_recognized = parse_cmu_with_pauses("M EH1 (0.12s pause) M B IY0").unwrap();
    b.canonical_ipa = Some(tokenize_ipa("m eɪ b iː", IpaMode::SpaceSeparated));
    b.tobi = Some(TobiAnnotation {
        events: vec![TobiEvent { label: "maybe".into(), break_index: 4, tone: Some("L-L%".into()) }],
    });
    b.source_meta.insert("asr".into(), "large-en".into());
    b.unintelligible = true;
    b
}

fn cmu_pattern() -> Regex {
    Regex::new(schema()["properties"]["cmu_recognized"]["pattern"].as_str().unwrap()).unwrap()
}

#[test]
fn properties_match_serialized_fields() {
    let s = schema();
    let serialized = serde_json::to_value(full_bundle()).unwrap();
    assert_eq!(keys(&s["properties"]), keys(&serialized));

    let minimal = serde_json::to_value(CueBundle::new("u1", "x")).unwrap();
    assert_eq!(strings(&s["required"]), keys(&minimal));
    assert_eq!(s["additionalProperties"], Value::Bool(false));

    let event = &s["properties"]["tobi"]["properties"]["events"]["items"];
    assert_eq!(keys(&event["properties"]), keys(&serialized["tobi"]["events"][0]));
}

#[test]
fn fixture_manifest_conforms() {
    let s = schema();
    let props = keys(&s["properties"]);
    let required = strings(&s["required"]);
    let pattern = cmu_pattern();
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/manifest.jsonl");
    let rows: Vec<Value> = read_jsonl_file(&path).unwrap();
    assert_eq!(rows.len(), 10);
    for row in rows {
        let k = keys(&row);
        assert!(k.is_subset(&props), "{k:?}");
        assert!(required.is_subset(&k));
        assert!(pattern.is_match(row["cmu_recognized"].as_str().unwrap()));
        serde_json::from_value::<CueBundle>(row).unwrap();
    }
}

#[test]
fn cmu_pattern_agrees_with_parser_on_bad_input() {
    let pattern = cmu_pattern();
    for bad in ["M QQ", "EH3", "B1", "M (0.12s pause)", "(pause) M"] {
        assert!(parse_cmu_with_pauses(bad).is_err(), "{bad}");
        assert!(!pattern.is_match(bad), "{bad}");
    }
    assert!(pattern.is_match(""));
    // producers must emit uppercase; the parser also accepts lowercase
    assert!(!pattern.is_match("m eh1"));
    assert!(parse_cmu_with_pauses("m eh1").is_ok());
}

proptest! {
    #[test]
    fn rendered_sequences_match_pattern(
        toks in prop::collection::vec((0usize..39, 0u8..3, prop::option::of(0u32..500)), 0..12)
    ) {
        let tokens: Vec<CmuToken> = toks
            .iter()
            .map(|&(i, s, p)| {
                let phone = ARPABET_PHONES[i];
                let stress = pronassess::phoneme::is_vowel_phone(phone).then_some(s);
                CmuToken::new(phone, stress, p.map(|c| c as f64 / 100.0)).unwrap()
            })
            .collect();
        let text = render_cmu_with_pauses(&CmuSequence::new(tokens));
        prop_assert!(cmu_pattern().is_match(&text), "{}", text);
    }
}
