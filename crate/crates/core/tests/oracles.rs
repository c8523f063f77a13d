mod common;

use std::collections::BTreeMap;

use common::{fixture, manifest};
use pronassess::align::ScoringScheme;
use pronassess::bundle::{read_jsonl_file, CueBundle};
use pronassess::config::{AblationConfig, Config, ScoringMode};
use pronassess::dimension::Dimension;
use pronassess::eval::{LabelRecord, LabelSet};
use pronassess::lexicon::{canonical_ipa, Lexicon};
use pronassess::phoneme::{IpaSequence, IpaToken};
use pronassess::pipeline::{run_ablation, run_pipeline, RunInputs, ScoringContext};
use serde_json::Value;

/// Computational-formula Pearson, written independently of the library.
fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn oracle_minmax(v: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let lo = v.values().cloned().fold(f64::MAX, f64::min);
    let hi = v.values().cloned().fold(f64::MIN, f64::max);
    v.iter().map(|(k, x)| (k.clone(), if hi > lo { (x - lo) / (hi - lo) } else { 0.5 })).collect()
}

fn fixture_config(dir: &std::path::Path) -> Config {
    let mut config = Config::load(fixture("score.toml")).unwrap();
    config.pipeline.runs_dir = dir.to_path_buf();
    config
}

fn column(rows: &[Value], field: &str) -> BTreeMap<String, f64> {
    rows.iter()
        .filter_map(|r| Some((r["utt_id"].as_str()?.to_string(), r[field].as_f64()?)))
        .collect()
}

fn table_entries(v: &Value) -> BTreeMap<String, f64> {
    v["entries"].as_object().unwrap().iter().map(|(k, x)| (k.clone(), x.as_f64().unwrap())).collect()
}

#[test]
fn evaluate_run_matches_oracle_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = RunInputs {
        manifest: fixture("manifest.jsonl"),
        labels: Some(fixture("labels.jsonl")),
        external_scores: None,
    };
    let run = run_pipeline(&inputs, &fixture_config(dir.path())).unwrap();
    let scores: Value = serde_json::from_str(&std::fs::read_to_string(run.dir.join("scores.json")).unwrap()).unwrap();
    let labels: Vec<Value> = read_jsonl_file(fixture("labels.jsonl")).unwrap();
    for dim in ["accuracy", "fluency"] {
        let pred = table_entries(&scores["predictions"][dim]);
        let gold = column(&labels, dim);
        let ids: Vec<&String> = pred.keys().filter(|k| gold.contains_key(*k)).collect();
        let x: Vec<f64> = ids.iter().map(|k| pred[*k]).collect();
        let y: Vec<f64> = ids.iter().map(|k| gold[*k]).collect();
        let expected = oracle_pearson(&x, &y);
        let d: Dimension = dim.parse().unwrap();
        let got = run.reports[0].dimensions[&d].pcc.unwrap();
        assert!((got - expected).abs() < 1e-12, "{dim}: {got} vs {expected}");
        assert_eq!(run.reports[0].dimensions[&d].n, 10);
    }
}

#[test]
fn fused_scores_match_oracle_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = RunInputs {
        manifest: fixture("manifest.jsonl"),
        labels: None,
        external_scores: Some(fixture("external_scores.jsonl")),
    };
    let run = run_pipeline(&inputs, &fixture_config(dir.path())).unwrap();
    assert!(run.reports.is_empty());
    assert!(!run.dir.join("report.json").exists());
    let scores: Value = serde_json::from_str(&std::fs::read_to_string(run.dir.join("scores.json")).unwrap()).unwrap();
    let external: Vec<Value> = read_jsonl_file(fixture("external_scores.jsonl")).unwrap();
    for dim in ["accuracy", "fluency"] {
        let ours = oracle_minmax(&table_entries(&scores["predictions"][dim]));
        let theirs = oracle_minmax(&column(&external, dim));
        let fused = table_entries(&scores["fused"][dim]);
        assert_eq!(fused.len(), 10);
        for (id, v) in &fused {
            let expected = (ours[id] + theirs[id]) / 2.0;
            assert!((v - expected).abs() < 1e-12, "{dim}/{id}");
        }
    }
}

#[test]
fn refined_accuracy_matches_oracle_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = RunInputs {
        manifest: fixture("manifest.jsonl"),
        ..RunInputs::default()
    };
    let run = run_pipeline(&inputs, &fixture_config(dir.path())).unwrap();
    let scores: Value = serde_json::from_str(&std::fs::read_to_string(run.dir.join("scores.json")).unwrap()).unwrap();
    let llm = oracle_minmax(&table_entries(&scores["llm"]["accuracy"]));
    let sim = oracle_minmax(&table_entries(&scores["match_ipa"]));
    let refined = table_entries(&scores["refined"]);
    for (id, v) in refined {
        assert!((v - (llm[&id] + sim[&id]) / 2.0).abs() < 1e-12);
    }
}

fn corrupt(seq: &IpaSequence) -> IpaSequence {
    // every other phoneme replaced by a symbol the canonical side never uses
    IpaSequence::new(
        seq.iter()
            .enumerate()
            .map(|(i, t)| if i % 2 == 0 { IpaToken::new("ʘ").unwrap() } else { t.clone() })
            .collect(),
    )
}

#[test]
fn ipa_match_beats_shuffled_labels() {
    // half the set is recognized exactly as canonical and labeled high
    let lexicon = Lexicon::bundled();
    let mut bundles = Vec::new();
    let mut labels = Vec::new();
    for (i, b) in manifest().into_iter().enumerate() {
        let (canon, _) = canonical_ipa(&b.transcript, lexicon).unwrap();
        let clean = i % 2 == 0;
        let mut nb = CueBundle::new(b.utt_id.clone(), b.transcript.clone());
        nb.ipa_recognized = if clean { canon } else { corrupt(&canon) };
        nb.cmu_recognized = b.cmu_recognized;
        bundles.push(nb);
        labels.push(LabelRecord {
            utt_id: b.utt_id,
            accuracy: if clean { 9.0 } else { 3.0 } + (i % 3) as f64 * 0.1,
            fluency: 5.0 + i as f64,
            prosody: None,
        });
    }
    let shuffled: Vec<LabelRecord> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| LabelRecord {
            utt_id: l.utt_id.clone(),
            ..labels[(i * 3 + 1) % labels.len()].clone()
        })
        .collect();
    let ctx = ScoringContext {
        lexicon,
        scheme: ScoringScheme::default(),
        workers: 3,
    };
    let rows = [AblationConfig {
        name: "ipa-match".into(),
        mode: ScoringMode::IpaMatch,
        prompt: None,
    }];
    let real = run_ablation(&bundles, &LabelSet::from_records(labels, "0-10").unwrap(), &rows, None, &ctx).unwrap();
    let control = run_ablation(&bundles, &LabelSet::from_records(shuffled, "0-10").unwrap(), &rows, None, &ctx).unwrap();
    assert_eq!(real.len(), 1);
    let r = real[0].dimensions[&Dimension::Accuracy].pcc.unwrap();
    let c = control[0].dimensions[&Dimension::Accuracy].pcc.unwrap();
    assert!(r > 0.9, "{r}");
    assert!(r > c, "{r} vs control {c}");
    assert!(!real[0].dimensions.contains_key(&Dimension::Fluency));
}
