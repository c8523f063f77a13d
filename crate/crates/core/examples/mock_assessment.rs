//! Retry-until-valid against the scripted mock backend.

use pronassess::bundle::CueBundle;
use pronassess::llm::{assess_with_retry, BackendConfig, LlmClient, MockScript, MockTransport};
use pronassess::phoneme::{parse_cmu_with_pauses, tokenize_ipa, IpaMode};
use pronassess::prompt::PromptConfig;

fn main() {
    let mut bundle = CueBundle::new("demo", "maybe");
    bundle.ipa_recognized = tokenize_ipa("m ɛ m b i", IpaMode::SpaceSeparated);
    bundle.cmu_recognized = parse_cmu_with_pauses("M EH1 (0.12s pause) M B IY0").unwrap();

    let script = MockScript::default().with_text(
        "demo",
        &[
            "Sure! Here is my assessment.",
            r#"{"accuracy": 3, "fluency": 4, "reason_accuracy": "eɪ realized as ɛ and an extra m", "reason_fluency": "one short pause"}"#,
        ],
    );
    let config = BackendConfig {
        backoff_base_ms: 0,
        ..BackendConfig::mock()
    };
    let client = LlmClient::with_transport(config, Box::new(MockTransport::new(script)));
    let out = assess_with_retry(&bundle, &PromptConfig::all_cues(), &client).unwrap();
    println!("attempts: {}", out.attempts);
    println!("{}", serde_json::to_string_pretty(&out.result).unwrap());
}
