//! Smith–Waterman local alignment over phoneme tokens and the derived
//! canonical-vs-recognized similarity in `[0, 1]`.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phoneme::{CmuToken, IpaToken};

/// A token comparable by symbol. CMU tokens compare by phone only, so stress
/// digits never cause a mismatch.
pub trait Symbol {
    fn key(&self) -> &str;
}

impl Symbol for IpaToken {
    fn key(&self) -> &str {
        self.symbol()
    }
}

impl Symbol for CmuToken {
    fn key(&self) -> &str {
        self.phone()
    }
}

impl Symbol for str {
    fn key(&self) -> &str {
        self
    }
}

impl Symbol for String {
    fn key(&self) -> &str {
        self
    }
}

impl<T: Symbol + ?Sized> Symbol for &T {
    fn key(&self) -> &str {
        (**self).key()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignError {
    #[error("invalid scoring scheme: {0}")]
    InvalidScheme(String),
    #[error("canonical sequence is empty")]
    EmptyCanonical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringScheme {
    #[serde(rename = "match")]
    pub match_reward: f64,
    #[serde(rename = "mismatch")]
    pub mismatch_penalty: f64,
    #[serde(rename = "gap")]
    pub gap_penalty: f64,
}

impl Default for ScoringScheme {
    fn default() -> Self {
        Self {
            match_reward: 2.0,
            mismatch_penalty: -1.0,
            gap_penalty: -1.0,
        }
    }
}

impl ScoringScheme {
    pub fn new(match_reward: f64, mismatch_penalty: f64, gap_penalty: f64) -> Result<Self, AlignError> {
        let scheme = Self {
            match_reward,
            mismatch_penalty,
            gap_penalty,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<(), AlignError> {
        let finite = [self.match_reward, self.mismatch_penalty, self.gap_penalty]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(AlignError::InvalidScheme("values must be finite".into()));
        }
        if self.match_reward <= 0.0 {
            return Err(AlignError::InvalidScheme("match reward must be > 0".into()));
        }
        if self.mismatch_penalty > 0.0 || self.gap_penalty > 0.0 {
            return Err(AlignError::InvalidScheme(
                "mismatch and gap penalties must be <= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn pair_score<T: Symbol + ?Sized>(&self, a: &T, b: &T) -> f64 {
        if a.key() == b.key() {
            self.match_reward
        } else {
            self.mismatch_penalty
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentResult {
    pub score: f64,
    /// `(a index, b index)`; `None` marks a gap on that side.
    pub aligned_pairs: Vec<(Option<usize>, Option<usize>)>,
    pub canonical_span: Range<usize>,
    pub recognized_span: Range<usize>,
}

impl AlignmentResult {
    fn empty() -> Self {
        Self {
            score: 0.0,
            aligned_pairs: Vec::new(),
            canonical_span: 0..0,
            recognized_span: 0..0,
        }
    }
}

pub fn smith_waterman<T: Symbol>(a: &[T], b: &[T], scheme: &ScoringScheme) -> AlignmentResult {
    smith_waterman_by(a, b, scheme.gap_penalty, |x, y| scheme.pair_score(x, y))
}

/// Local alignment with a caller-supplied substitution score. `pair_score`
/// must be symmetric for the result to be order-independent.
pub fn smith_waterman_by<T, F>(a: &[T], b: &[T], gap: f64, pair_score: F) -> AlignmentResult
where
    F: Fn(&T, &T) -> f64,
{
    if a.is_empty() || b.is_empty() {
        return AlignmentResult::empty();
    }
    let cols = b.len() + 1;
    let mut h = vec![0.0f64; (a.len() + 1) * cols];
    let at = |i: usize, j: usize| i * cols + j;

    let mut best = (0.0, 0, 0);
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let diag = h[at(i - 1, j - 1)] + pair_score(&a[i - 1], &b[j - 1]);
            let up = h[at(i - 1, j)] + gap;
            let left = h[at(i, j - 1)] + gap;
            let v = diag.max(up).max(left).max(0.0);
            h[at(i, j)] = v;
            if v > best.0 {
                best = (v, i, j);
            }
        }
    }

    let (score, mut i, mut j) = best;
    if score <= 0.0 {
        return AlignmentResult::empty();
    }
    let (end_i, end_j) = (i, j);
    let mut pairs = Vec::new();
    while i > 0 && j > 0 && h[at(i, j)] > 0.0 {
        let v = h[at(i, j)];
        if v == h[at(i - 1, j - 1)] + pair_score(&a[i - 1], &b[j - 1]) {
            pairs.push((Some(i - 1), Some(j - 1)));
            i -= 1;
            j -= 1;
        } else if v == h[at(i - 1, j)] + gap {
            pairs.push((Some(i - 1), None));
            i -= 1;
        } else {
            pairs.push((None, Some(j - 1)));
            j -= 1;
        }
    }
    pairs.reverse();
    AlignmentResult {
        score,
        aligned_pairs: pairs,
        canonical_span: i..end_i,
        recognized_span: j..end_j,
    }
}

/// Local-alignment score divided by the best achievable score
/// (`match_reward * canonical.len()`), clamped to `[0, 1]`.
pub fn match_similarity<T: Symbol>(
    canonical: &[T],
    recognized: &[T],
    scheme: &ScoringScheme,
) -> Result<f64, AlignError> {
    if canonical.is_empty() {
        return Err(AlignError::EmptyCanonical);
    }
    let result = smith_waterman(canonical, recognized, scheme);
    let ceiling = scheme.match_reward * canonical.len() as f64;
    Ok((result.score / ceiling).clamp(0.0, 1.0))
}
