//! Dictionary lookup of a transcript's expected pronunciation.

use pronassess::lexicon::{canonical_cmu, canonical_ipa, Lexicon};
use pronassess::phoneme::render_cmu_with_pauses;

fn main() {
    let transcript = std::env::args().nth(1).unwrap_or_else(|| "his head hurts even worse".into());
    let lexicon = Lexicon::bundled();
    match canonical_ipa(&transcript, lexicon) {
        Ok((ipa, report)) => {
            println!("ipa: {}", ipa.render());
            for w in &report.oov_words {
                println!("not in lexicon: {}", w.word);
            }
        }
        Err(e) => println!("no canonical form: {e}"),
    }
    if let Ok((cmu, _)) = canonical_cmu(&transcript, lexicon) {
        println!("cmu: {}", render_cmu_with_pauses(&cmu));
    }
}
