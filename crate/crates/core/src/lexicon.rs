//! Pronouncing-dictionary lookup and ARPABET to IPA conversion.
//!
//! The dictionary is read from CMUdict text format. Only the first (preferred)
//! pronunciation of each word is used when mapping a transcript; words missing
//! from the dictionary are skipped and listed in an [`OovReport`].

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;

use crate::phoneme::{CmuSequence, CmuToken, IpaSequence, IpaToken, ARPABET_PHONES};

const ARPABET_TABLE: &str = include_str!("../data/arpabet_ipa.tsv");
const BUNDLED_LEXICON: &str = include_str!("../data/cmudict-mini.dict");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("reading lexicon: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum G2pError {
    #[error("unknown ARPABET phone `{0}`")]
    UnknownPhone(String),
    #[error("no transcript word maps to a pronunciation")]
    EmptyCanonical(OovReport),
}

#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, Vec<CmuSequence>>,
}

impl Lexicon {
    /// Loads a CMUdict-format lexicon. Alternates `WORD(n)` are ordered by `n`
    /// after the base form.
    pub fn load(reader: impl BufRead) -> Result<Self, LexiconError> {
        let mut staged: HashMap<String, Vec<(u32, CmuSequence)>> = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = idx + 1;
            let content = match line.find(" #") {
                Some(pos) => &line[..pos],
                None => &line,
            };
            let content = content.trim();
            if content.is_empty() || content.starts_with(";;;") {
                continue;
            }
            let parse_err = |message: String| LexiconError::Parse {
                line: line_no,
                message,
            };
            let mut parts = content.split_whitespace();
            let head = parts.next().expect("non-empty line");
            let (word, variant) = split_variant(head)
                .ok_or_else(|| parse_err(format!("bad alternate suffix in `{head}`")))?;
            let phones = parts
                .map(|p| {
                    p.parse::<CmuToken>()
                        .map_err(|e| parse_err(format!("word `{word}`: {e}")))
                })
                .collect::<Result<CmuSequence, _>>()?;
            if phones.is_empty() {
                return Err(parse_err(format!("word `{word}` has no phones")));
            }
            staged
                .entry(word.to_lowercase())
                .or_default()
                .push((variant, phones));
        }
        let entries = staged
            .into_iter()
            .map(|(word, mut variants)| {
                variants.sort_by_key(|(n, _)| *n);
                (word, variants.into_iter().map(|(_, seq)| seq).collect())
            })
            .collect();
        Ok(Self { entries })
    }

    pub fn load_str(source: &str) -> Result<Self, LexiconError> {
        Self::load(source.as_bytes())
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let file = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(file))
    }

    /// The small dictionary shipped with the crate.
    pub fn bundled() -> &'static Lexicon {
        static LEXICON: OnceLock<Lexicon> = OnceLock::new();
        LEXICON.get_or_init(|| Lexicon::load_str(BUNDLED_LEXICON).expect("bundled lexicon parses"))
    }

    /// All variants, preferred first. Case-insensitive.
    pub fn lookup(&self, word: &str) -> Option<&[CmuSequence]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn preferred(&self, word: &str) -> Option<&CmuSequence> {
        self.lookup(word).and_then(|v| v.first())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn split_variant(head: &str) -> Option<(&str, u32)> {
    match head.strip_suffix(')') {
        None => Some((head, 0)),
        Some(rest) => {
            let open = rest.rfind('(')?;
            let n: u32 = rest[open + 1..].parse().ok()?;
            let word = &rest[..open];
            (!word.is_empty()).then_some((word, n))
        }
    }
}

fn conversion_table() -> &'static HashMap<&'static str, Vec<IpaToken>> {
    static TABLE: OnceLock<HashMap<&'static str, Vec<IpaToken>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let table: HashMap<_, _> = ARPABET_TABLE
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|l| {
                let (phone, ipa) = l.split_once('\t').expect("tab-separated row");
                let tokens = ipa
                    .split_whitespace()
                    .map(|s| IpaToken::new(s).expect("valid IPA in table"))
                    .collect();
                (phone, tokens)
            })
            .collect();
        assert_eq!(table.len(), ARPABET_PHONES.len(), "one row per ARPABET phone");
        table
    })
}

pub fn arpabet_to_ipa(token: &CmuToken) -> Result<Vec<IpaToken>, G2pError> {
    conversion_table()
        .get(token.phone())
        .cloned()
        .ok_or_else(|| G2pError::UnknownPhone(token.phone().to_string()))
}

pub fn cmu_to_ipa(seq: &CmuSequence) -> Result<IpaSequence, G2pError> {
    let mut out = Vec::with_capacity(seq.len());
    for token in seq.iter() {
        out.extend(arpabet_to_ipa(token)?);
    }
    Ok(IpaSequence::new(out))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OovWord {
    pub word: String,
    /// Index of the word within the normalized transcript.
    pub position: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct OovReport {
    pub oov_words: Vec<OovWord>,
    /// One flag per transcript word; `true` when the word was skipped.
    pub fallback_used: Vec<bool>,
}

impl OovReport {
    pub fn oov_count(&self) -> usize {
        self.oov_words.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CanonicalTarget {
    Ipa,
    Cmu,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CanonicalSequence {
    Ipa(IpaSequence),
    Cmu(CmuSequence),
}

/// Lowercases, strips punctuation (apostrophes inside words survive) and
/// splits on whitespace.
pub fn normalize_transcript(transcript: &str) -> Vec<String> {
    let cleaned: String = transcript
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '\'' || c == '’' { c } else { ' ' })
        .map(|c| if c == '’' { '\'' } else { c })
        .collect();
    cleaned
        .split_whitespace()
        .map(|w| w.trim_matches('\''))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn transcript_to_canonical(
    transcript: &str,
    lexicon: &Lexicon,
    target: CanonicalTarget,
) -> Result<(CanonicalSequence, OovReport), G2pError> {
    let words = normalize_transcript(transcript);
    let mut report = OovReport::default();
    let mut cmu = Vec::new();
    for (position, word) in words.iter().enumerate() {
        match lexicon.preferred(word) {
            Some(seq) => {
                cmu.extend(seq.iter().cloned());
                report.fallback_used.push(false);
            }
            None => {
                report.oov_words.push(OovWord {
                    word: word.clone(),
                    position,
                });
                report.fallback_used.push(true);
            }
        }
    }
    if cmu.is_empty() {
        return Err(G2pError::EmptyCanonical(report));
    }
    let cmu = CmuSequence::new(cmu);
    let canonical = match target {
        CanonicalTarget::Cmu => CanonicalSequence::Cmu(cmu),
        CanonicalTarget::Ipa => CanonicalSequence::Ipa(cmu_to_ipa(&cmu)?),
    };
    Ok((canonical, report))
}

pub fn canonical_ipa(
    transcript: &str,
    lexicon: &Lexicon,
) -> Result<(IpaSequence, OovReport), G2pError> {
    match transcript_to_canonical(transcript, lexicon, CanonicalTarget::Ipa)? {
        (CanonicalSequence::Ipa(seq), report) => Ok((seq, report)),
        _ => unreachable!("requested IPA"),
    }
}

pub fn canonical_cmu(
    transcript: &str,
    lexicon: &Lexicon,
) -> Result<(CmuSequence, OovReport), G2pError> {
    match transcript_to_canonical(transcript, lexicon, CanonicalTarget::Cmu)? {
        (CanonicalSequence::Cmu(seq), report) => Ok((seq, report)),
        _ => unreachable!("requested CMU"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phoneme::{parse_cmu_with_pauses, tokenize_ipa, IpaMode};
    use std::collections::HashSet;

    fn ipa(s: &str) -> IpaSequence {
        tokenize_ipa(s, IpaMode::SpaceSeparated)
    }

    #[test]
    fn loads_single_entry() {
        let lex = Lexicon::load_str("MAYBE  M EY1 B IY0\n").unwrap();
        let variants = lex.lookup("maybe").unwrap();
        assert_eq!(variants.len(), 1);
        assert_eq!(variants[0], parse_cmu_with_pauses("M EY1 B IY0").unwrap());
        assert_eq!(lex.lookup("MayBe"), lex.lookup("maybe"));
    }

    #[test]
    fn alternates_follow_base_in_index_order() {
        let lex = Lexicon::load_str("READ(2)  R IY1 D Z\nREAD  R EH1 D\nREAD(1)  R IY1 D\n")
            .unwrap();
        let variants = lex.lookup("read").unwrap();
        assert_eq!(variants.len(), 3);
        assert_eq!(variants[0].tokens[1].phone(), "EH");
        assert_eq!(variants[1].tokens[1].phone(), "IY");
        assert_eq!(variants[2].len(), 4);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let lex = Lexicon::load_str(";;; comment\n\nA  AH0 # article\n").unwrap();
        assert_eq!(lex.len(), 1);
        assert!(Lexicon::load_str("").unwrap().is_empty());
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let err = Lexicon::load_str("A  AH0\nBAD\n").unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 2, .. }), "{err}");
        let err = Lexicon::load_str(";;; x\nFOO  F QQ1\n").unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 2, .. }), "{err}");
        let err = Lexicon::load_str("FOO(x)  F UW1\n").unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn conversion_examples() {
        let conv = |p: &str| arpabet_to_ipa(&p.parse().unwrap()).unwrap();
        assert_eq!(conv("EY1"), ipa("eɪ").tokens);
        assert_eq!(conv("IY0"), ipa("i:").tokens);
        assert_eq!(conv("B"), ipa("b").tokens);
    }

    #[test]
    fn conversion_table_is_total_and_injective() {
        let mut seen = HashSet::new();
        for phone in ARPABET_PHONES {
            let tokens = arpabet_to_ipa(&phone.parse().unwrap()).unwrap();
            assert!(!tokens.is_empty());
            assert!(seen.insert(tokens), "duplicate row for {phone}");
        }
    }

    #[test]
    fn maybe_maps_to_canonical_ipa() {
        let (seq, report) = canonical_ipa("Maybe", Lexicon::bundled()).unwrap();
        assert_eq!(seq, ipa("m eɪ b iː"));
        assert_eq!(report.oov_count(), 0);
    }

    #[test]
    fn empty_transcript_has_no_canonical() {
        let err = canonical_ipa("", Lexicon::bundled()).unwrap_err();
        assert!(matches!(err, G2pError::EmptyCanonical(_)));
        let err = canonical_ipa("zzyzx qqq", Lexicon::bundled()).unwrap_err();
        match err {
            G2pError::EmptyCanonical(r) => assert_eq!(r.oov_count(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn five_word_sentence_concatenates_entries() {
        // entries written out by hand from the dictionary file
        let expected = ipa("h ɪ z  h ɛ d  h ɝ t s  iː v ɪ n  w ɝ s");
        let (seq, report) = canonical_ipa("His head hurts even worse.", Lexicon::bundled()).unwrap();
        assert_eq!(seq, expected);
        assert_eq!(seq.len(), 3 + 3 + 4 + 4 + 3);
        assert_eq!(report.oov_count(), 0);
        assert_eq!(report.fallback_used, vec![false; 5]);
    }

    #[test]
    fn oov_words_are_skipped_and_reported() {
        let (seq, report) = canonical_cmu("maybe, blorf we", Lexicon::bundled()).unwrap();
        assert_eq!(seq.len(), 4 + 2);
        assert_eq!(
            report.oov_words,
            vec![OovWord {
                word: "blorf".into(),
                position: 1
            }]
        );
        assert_eq!(report.fallback_used, vec![false, true, false]);
    }

    #[test]
    fn transcript_normalization_keeps_inner_apostrophes() {
        assert_eq!(
            normalize_transcript("Don't stop -- 'now', OK?"),
            ["don't", "stop", "now", "ok"]
        );
    }

    #[test]
    fn canonical_length_is_sum_of_variant_lengths() {
        let lex = Lexicon::bundled();
        let text = "we went to the park last weekend";
        let expected: usize = normalize_transcript(text)
            .iter()
            .map(|w| lex.preferred(w).unwrap().len())
            .sum();
        let (seq, _) = canonical_cmu(text, lex).unwrap();
        assert_eq!(seq.len(), expected);
        assert_eq!(canonical_cmu(text, lex).unwrap().0, seq);
    }
}
