//! Textual phoneme representations: IPA token sequences and ARPABET (CMU)
//! sequences carrying inline pause annotations such as `D (0.12s pause) G`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// The 39 ARPABET phones used by CMUdict.
pub const ARPABET_PHONES: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH",
    "IH", "IY", "JH", "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH",
    "UW", "V", "W", "Y", "Z", "ZH",
];

const VOWELS: [&str; 15] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH", "IY", "OW", "OY", "UH", "UW",
];

const PRIMARY_STRESS: char = '\u{02C8}';
const SECONDARY_STRESS: char = '\u{02CC}';
pub const LENGTH_MARK: char = '\u{02D0}';
const HALF_LENGTH_MARK: char = '\u{02D1}';
const TIE_BELOW: char = '\u{035C}';
const TIE_ABOVE: char = '\u{0361}';

pub fn is_arpabet_phone(phone: &str) -> bool {
    ARPABET_PHONES.contains(&phone)
}

pub fn is_vowel_phone(phone: &str) -> bool {
    VOWELS.contains(&phone)
}

fn is_stress_mark(c: char) -> bool {
    c == PRIMARY_STRESS || c == SECONDARY_STRESS
}

/// Characters that attach to the preceding base symbol.
fn is_modifier(c: char) -> bool {
    is_combining_mark(c)
        || matches!(
            c,
            LENGTH_MARK
                | HALF_LENGTH_MARK
                | 'ʰ'
                | 'ʲ'
                | 'ʷ'
                | 'ˠ'
                | 'ˤ'
                | 'ⁿ'
                | 'ˡ'
                | 'ʼ'
                | '˞'
        )
}

/// One IPA symbol with its attached diacritics.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IpaToken(String);

impl IpaToken {
    /// Normalizes `raw` (NFC, ASCII `:` to `ː`, stress marks dropped) and
    /// returns `None` if nothing remains or whitespace is present.
    pub fn new(raw: &str) -> Option<Self> {
        let symbol = normalize_ipa(raw);
        if symbol.is_empty() || symbol.chars().any(char::is_whitespace) {
            return None;
        }
        Some(Self(symbol))
    }

    pub fn symbol(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for IpaToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn normalize_ipa(raw: &str) -> String {
    raw.nfc()
        .filter(|c| !is_stress_mark(*c))
        .map(|c| if c == ':' { LENGTH_MARK } else { c })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpaMode {
    /// Tokens are whitespace-separated fields.
    SpaceSeparated,
    /// Raw transcription; each base symbol collects its following modifiers.
    Contiguous,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct IpaSequence {
    pub tokens: Vec<IpaToken>,
}

impl IpaSequence {
    pub fn new(tokens: Vec<IpaToken>) -> Self {
        Self { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, IpaToken> {
        self.tokens.iter()
    }

    /// Space-separated rendering; the inverse of space-separated tokenization.
    pub fn render(&self) -> String {
        self.tokens
            .iter()
            .map(IpaToken::symbol)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for IpaSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl FromIterator<IpaToken> for IpaSequence {
    fn from_iter<I: IntoIterator<Item = IpaToken>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

impl Serialize for IpaSequence {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for IpaSequence {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Ok(tokenize_ipa(&raw, IpaMode::SpaceSeparated))
    }
}

pub fn tokenize_ipa(raw: &str, mode: IpaMode) -> IpaSequence {
    match mode {
        IpaMode::SpaceSeparated => raw.split_whitespace().filter_map(IpaToken::new).collect(),
        IpaMode::Contiguous => tokenize_contiguous(raw),
    }
}

fn tokenize_contiguous(raw: &str) -> IpaSequence {
    let normalized = normalize_ipa(raw);
    let mut tokens = Vec::new();
    let mut current = String::new();
    // set after a tie bar, so the next base joins the current token (t͡ʃ)
    let mut tied = false;
    for c in normalized.chars() {
        if c.is_whitespace() {
            flush(&mut current, &mut tokens);
            tied = false;
        } else if is_modifier(c) {
            // a leading modifier with no base stands alone
            current.push(c);
            tied = c == TIE_ABOVE || c == TIE_BELOW;
        } else if tied {
            current.push(c);
            tied = false;
        } else {
            flush(&mut current, &mut tokens);
            current.push(c);
        }
    }
    flush(&mut current, &mut tokens);
    IpaSequence::new(tokens)
}

fn flush(current: &mut String, tokens: &mut Vec<IpaToken>) {
    if !current.is_empty() {
        tokens.push(IpaToken(std::mem::take(current)));
    }
}

/// An ARPABET phone with optional stress digit and optional preceding pause.
#[derive(Debug, Clone, PartialEq)]
pub struct CmuToken {
    phone: String,
    stress: Option<u8>,
    pause_before_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CmuTokenError {
    #[error("unknown ARPABET phone `{0}`")]
    UnknownPhone(String),
    #[error("stress digit {stress} is not allowed on `{phone}`")]
    InvalidStress { phone: String, stress: u8 },
    #[error("pause duration {0} is not a finite non-negative number")]
    InvalidPause(f64),
}

impl CmuToken {
    pub fn new(
        phone: &str,
        stress: Option<u8>,
        pause_before_s: Option<f64>,
    ) -> Result<Self, CmuTokenError> {
        let phone = phone.to_ascii_uppercase();
        if !is_arpabet_phone(&phone) {
            return Err(CmuTokenError::UnknownPhone(phone));
        }
        if let Some(stress) = stress {
            if stress > 2 || !is_vowel_phone(&phone) {
                return Err(CmuTokenError::InvalidStress { phone, stress });
            }
        }
        if let Some(p) = pause_before_s {
            if !p.is_finite() || p < 0.0 {
                return Err(CmuTokenError::InvalidPause(p));
            }
        }
        Ok(Self {
            phone,
            stress,
            pause_before_s,
        })
    }

    pub fn phone(&self) -> &str {
        &self.phone
    }

    pub fn stress(&self) -> Option<u8> {
        self.stress
    }

    pub fn pause_before_s(&self) -> Option<f64> {
        self.pause_before_s
    }

    pub fn with_pause_before(mut self, seconds: Option<f64>) -> Result<Self, CmuTokenError> {
        if let Some(p) = seconds {
            if !p.is_finite() || p < 0.0 {
                return Err(CmuTokenError::InvalidPause(p));
            }
        }
        self.pause_before_s = seconds;
        Ok(self)
    }

    /// Phone plus stress digit, without the pause.
    pub fn label(&self) -> String {
        match self.stress {
            Some(s) => format!("{}{}", self.phone, s),
            None => self.phone.clone(),
        }
    }
}

impl FromStr for CmuToken {
    type Err = CmuTokenError;

    /// Parses a phone label such as `EY1` or `B`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (phone, stress) = match s.as_bytes().last() {
            Some(d @ b'0'..=b'9') => (&s[..s.len() - 1], Some(d - b'0')),
            _ => (s, None),
        };
        if phone.is_empty() {
            return Err(CmuTokenError::UnknownPhone(s.to_string()));
        }
        Self::new(phone, stress, None)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CmuSequence {
    pub tokens: Vec<CmuToken>,
}

impl CmuSequence {
    pub fn new(tokens: Vec<CmuToken>) -> Self {
        Self { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, CmuToken> {
        self.tokens.iter()
    }
}

impl FromIterator<CmuToken> for CmuSequence {
    fn from_iter<I: IntoIterator<Item = CmuToken>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

impl fmt::Display for CmuSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_cmu_with_pauses(self))
    }
}

impl Serialize for CmuSequence {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&render_cmu_with_pauses(self))
    }
}

impl<'de> Deserialize<'de> for CmuSequence {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        parse_cmu_with_pauses(&raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CmuParseError {
    #[error("malformed pause annotation at byte {offset}: `{text}`")]
    MalformedPause { offset: usize, text: String },
    #[error("unknown phone `{text}` at byte {offset}")]
    UnknownPhone { offset: usize, text: String },
    #[error("pause annotation at byte {offset} has no following phone")]
    TrailingPause { offset: usize },
}

impl CmuParseError {
    pub fn offset(&self) -> usize {
        match self {
            Self::MalformedPause { offset, .. }
            | Self::UnknownPhone { offset, .. }
            | Self::TrailingPause { offset } => *offset,
        }
    }
}

/// Whitespace-delimited fields with their byte offsets.
fn fields(raw: &str) -> impl Iterator<Item = (usize, &str)> {
    raw.split(char::is_whitespace)
        .scan(0usize, |pos, field| {
            let start = *pos;
            *pos += field.len() + 1;
            Some((start, field))
        })
        .filter(|(_, f)| !f.is_empty())
}

fn parse_duration(text: &str) -> Option<f64> {
    let digits = text.strip_suffix('s')?;
    let valid = !digits.is_empty()
        && digits.chars().all(|c| c.is_ascii_digit() || c == '.')
        && digits.chars().filter(|&c| c == '.').count() <= 1
        && digits.chars().any(|c| c.is_ascii_digit());
    if !valid {
        return None;
    }
    digits.parse::<f64>().ok().filter(|d| d.is_finite())
}

/// Parses `M EY1 (0.12s pause) B IY0`. A pause attaches to the next phone.
pub fn parse_cmu_with_pauses(raw: &str) -> Result<CmuSequence, CmuParseError> {
    let mut tokens = Vec::new();
    let mut pending: Option<(usize, f64)> = None;
    let mut iter = fields(raw).peekable();
    while let Some((offset, field)) = iter.next() {
        if let Some(rest) = field.strip_prefix('(') {
            let malformed = || CmuParseError::MalformedPause {
                offset,
                text: field.to_string(),
            };
            let seconds = parse_duration(rest).ok_or_else(malformed)?;
            match iter.next() {
                Some((_, "pause)")) => {}
                Some((o, t)) => {
                    return Err(CmuParseError::MalformedPause {
                        offset: o,
                        text: t.to_string(),
                    })
                }
                None => return Err(malformed()),
            }
            if pending.is_some() {
                // two pauses in a row have no canonical single-phone home
                return Err(malformed());
            }
            pending = Some((offset, seconds));
            continue;
        }
        let token = field
            .parse::<CmuToken>()
            .map_err(|_| CmuParseError::UnknownPhone {
                offset,
                text: field.to_string(),
            })?;
        let pause = pending.take().map(|(_, s)| s);
        tokens.push(token.with_pause_before(pause).expect("validated duration"));
    }
    if let Some((offset, _)) = pending {
        return Err(CmuParseError::TrailingPause { offset });
    }
    Ok(CmuSequence::new(tokens))
}

pub fn render_cmu_with_pauses(seq: &CmuSequence) -> String {
    let mut parts = Vec::with_capacity(seq.len());
    for token in seq.iter() {
        if let Some(p) = token.pause_before_s {
            parts.push(format!("({p:.2}s pause)"));
        }
        parts.push(token.label());
    }
    parts.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn symbols(seq: &IpaSequence) -> Vec<&str> {
        seq.iter().map(IpaToken::symbol).collect()
    }

    #[test]
    fn space_separated_tokens_with_length_mark() {
        let seq = tokenize_ipa("m eI b i:", IpaMode::SpaceSeparated);
        assert_eq!(symbols(&seq), ["m", "eI", "b", "iː"]);
    }

    #[test]
    fn empty_input_gives_empty_sequence() {
        assert!(tokenize_ipa("", IpaMode::SpaceSeparated).is_empty());
        assert!(tokenize_ipa("", IpaMode::Contiguous).is_empty());
        assert!(tokenize_ipa("   ", IpaMode::Contiguous).is_empty());
    }

    #[test]
    fn contiguous_drops_stress() {
        let input = "ˈmɛm";
        // hand-built codepoint classes for this string
        let classes = [('\u{02C8}', "stress"), ('\u{006D}', "base"), ('\u{025B}', "base"), ('\u{006D}', "base")];
        assert_eq!(input.chars().collect::<Vec<_>>(), classes.map(|(c, _)| c));
        let expected: Vec<String> = classes
            .iter()
            .filter(|(_, class)| *class == "base")
            .map(|(c, _)| c.to_string())
            .collect();
        let seq = tokenize_ipa(input, IpaMode::Contiguous);
        assert_eq!(symbols(&seq), expected);
        assert_eq!(symbols(&seq), ["m", "ɛ", "m"]);
    }

    #[test]
    fn contiguous_groups_modifiers() {
        // hand-built classes: base, combining, modifier letters
        let seq = tokenize_ipa("tʰiːn̩ t͡ʃ ˌa:", IpaMode::Contiguous);
        assert_eq!(symbols(&seq), ["tʰ", "iː", "n̩", "t͡ʃ", "aː"]);
    }

    #[test]
    fn contiguous_composes_decomposed_input() {
        // e + combining acute composes to é under NFC
        let seq = tokenize_ipa("e\u{0301}b", IpaMode::Contiguous);
        assert_eq!(symbols(&seq), ["\u{00E9}", "b"]);
    }

    #[test]
    fn stress_only_field_is_dropped() {
        let seq = tokenize_ipa("ˈ m", IpaMode::SpaceSeparated);
        assert_eq!(symbols(&seq), ["m"]);
    }

    #[test]
    fn parses_pause_onto_next_phone() {
        let seq = parse_cmu_with_pauses("D (0.12s pause) G").unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.tokens[0].phone(), "D");
        assert_eq!(seq.tokens[0].pause_before_s(), None);
        assert_eq!(seq.tokens[1].phone(), "G");
        assert_eq!(seq.tokens[1].pause_before_s(), Some(0.12));
    }

    #[test]
    fn parses_stress_digits() {
        let seq = parse_cmu_with_pauses("M EY1 B IY0").unwrap();
        let labels: Vec<_> = seq.iter().map(|t| (t.phone(), t.stress())).collect();
        assert_eq!(
            labels,
            [("M", None), ("EY", Some(1)), ("B", None), ("IY", Some(0))]
        );
        assert!(seq.iter().all(|t| t.pause_before_s().is_none()));
    }

    #[test]
    fn trailing_pause_is_rejected() {
        let err = parse_cmu_with_pauses("K (0.5s pause)").unwrap_err();
        assert_eq!(err, CmuParseError::TrailingPause { offset: 2 });
    }

    #[test]
    fn malformed_pause_is_located() {
        let err = parse_cmu_with_pauses("K (abcs pause) G").unwrap_err();
        assert!(matches!(err, CmuParseError::MalformedPause { offset: 2, .. }));
        let err = parse_cmu_with_pauses("K (0.1s gap) G").unwrap_err();
        assert!(matches!(err, CmuParseError::MalformedPause { offset: 8, .. }));
        let err = parse_cmu_with_pauses("K (-1s pause) G").unwrap_err();
        assert!(matches!(err, CmuParseError::MalformedPause { .. }));
        let err = parse_cmu_with_pauses("K (1s pause) (2s pause) G").unwrap_err();
        assert!(matches!(err, CmuParseError::MalformedPause { .. }));
    }

    #[test]
    fn unknown_phone_is_located() {
        let err = parse_cmu_with_pauses("M  QQ1").unwrap_err();
        assert_eq!(
            err,
            CmuParseError::UnknownPhone {
                offset: 3,
                text: "QQ1".into()
            }
        );
        // stress on a consonant is outside the grammar
        assert!(parse_cmu_with_pauses("B1").is_err());
        assert!(parse_cmu_with_pauses("EY3").is_err());
    }

    #[test]
    fn renders_pauses_and_stress() {
        let seq = CmuSequence::new(vec![
            CmuToken::new("D", None, None).unwrap(),
            CmuToken::new("G", None, Some(0.12)).unwrap(),
        ]);
        assert_eq!(render_cmu_with_pauses(&seq), "D (0.12s pause) G");
        assert_eq!(render_cmu_with_pauses(&CmuSequence::default()), "");
        let seq = CmuSequence::new(vec![
            CmuToken::new("M", None, None).unwrap(),
            CmuToken::new("EY", Some(1), None).unwrap(),
        ]);
        assert_eq!(render_cmu_with_pauses(&seq), "M EY1");
    }

    fn cmu_token() -> impl Strategy<Value = CmuToken> {
        (
            0..ARPABET_PHONES.len(),
            prop::option::of(0u8..=2),
            prop::option::of(0u32..500),
        )
            .prop_map(|(i, stress, pause)| {
                let phone = ARPABET_PHONES[i];
                let stress = stress.filter(|_| is_vowel_phone(phone));
                CmuToken::new(phone, stress, pause.map(|c| c as f64 / 100.0)).unwrap()
            })
    }

    proptest! {
        #[test]
        fn cmu_render_parse_identity(tokens in prop::collection::vec(cmu_token(), 0..20)) {
            let seq = CmuSequence::new(tokens);
            let back = parse_cmu_with_pauses(&render_cmu_with_pauses(&seq)).unwrap();
            prop_assert_eq!(back, seq);
        }

        #[test]
        fn ipa_join_split_identity(raw in prop::collection::vec("[a-zɛɪʊəŋʃθ][ːʰ]?", 0..12)) {
            let seq: IpaSequence = raw.iter().filter_map(|s| IpaToken::new(s)).collect();
            prop_assert_eq!(tokenize_ipa(&seq.render(), IpaMode::SpaceSeparated), seq);
        }

        #[test]
        fn tokens_never_hold_whitespace_or_stress(raw in "[a-zɛˈˌː: \u{0303}\u{0361}ʰ]{0,24}") {
            for mode in [IpaMode::SpaceSeparated, IpaMode::Contiguous] {
                for t in tokenize_ipa(&raw, mode).iter() {
                    prop_assert!(!t.symbol().is_empty());
                    prop_assert!(!t.symbol().chars().any(|c| c.is_whitespace() || is_stress_mark(c)));
                }
            }
        }

        #[test]
        fn parser_errors_are_located(raw in "[A-Z0-9() .sp]{0,30}") {
            if let Err(e) = parse_cmu_with_pauses(&raw) {
                prop_assert!(e.offset() <= raw.len());
            }
        }
    }
}
