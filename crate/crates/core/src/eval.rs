//! Pearson correlation against human labels, run reports, and reasoning
//! coverage tallies.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{read_jsonl_file, JsonlError};
use crate::dimension::Dimension;
use crate::fusion::ScoreTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PearsonError {
    #[error("length mismatch: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("need at least 2 points, got {n}")]
    TooFewPoints { n: usize },
    #[error("zero variance in {side:?}")]
    ZeroVariance { side: Side },
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, PearsonError> {
    if x.len() != y.len() {
        return Err(PearsonError::LengthMismatch { x: x.len(), y: y.len() });
    }
    let n = x.len();
    if n < 2 {
        return Err(PearsonError::TooFewPoints { n });
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return Err(PearsonError::ZeroVariance { side: Side::X });
    }
    if syy <= 0.0 {
        return Err(PearsonError::ZeroVariance { side: Side::Y });
    }
    let d = (n - 1) as f64;
    let r = (sxy / d) / ((sxx / d).sqrt() * (syy / d).sqrt());
    Ok(r.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub utt_id: String,
    pub accuracy: f64,
    pub fluency: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prosody: Option<f64>,
}

impl LabelRecord {
    pub fn score(&self, dim: Dimension) -> Option<f64> {
        match dim {
            Dimension::Accuracy => Some(self.accuracy),
            Dimension::Fluency => Some(self.fluency),
            Dimension::Prosody => self.prosody,
        }
    }
}

#[derive(Debug, Error)]
pub enum LabelError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("duplicate label for `{0}`")]
    Duplicate(String),
    #[error("non-finite label for `{0}`")]
    NonFinite(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub entries: BTreeMap<String, LabelRecord>,
    pub scale: String,
}

impl LabelSet {
    pub fn from_records(records: Vec<LabelRecord>, scale: impl Into<String>) -> Result<Self, LabelError> {
        let mut entries = BTreeMap::new();
        for r in records {
            let finite = r.accuracy.is_finite() && r.fluency.is_finite() && r.prosody.is_none_or(f64::is_finite);
            if !finite {
                return Err(LabelError::NonFinite(r.utt_id));
            }
            if entries.contains_key(&r.utt_id) {
                return Err(LabelError::Duplicate(r.utt_id));
            }
            entries.insert(r.utt_id.clone(), r);
        }
        Ok(Self {
            entries,
            scale: scale.into(),
        })
    }

    pub fn load(path: impl AsRef<Path>, scale: impl Into<String>) -> Result<Self, LabelError> {
        Self::from_records(read_jsonl_file(path)?, scale)
    }

    pub fn table(&self, dim: Dimension) -> ScoreTable {
        let mut t = ScoreTable::new(dim, format!("labels ({})", self.scale));
        for (id, r) in &self.entries {
            if let Some(v) = r.score(dim) {
                t.insert(id.clone(), v);
            }
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub pcc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<PearsonError>,
    pub n: usize,
    /// Labeled utterances with no prediction.
    pub missing_predictions: usize,
    /// Predicted utterances with no label.
    pub missing_labels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_id: String,
    pub dimensions: BTreeMap<Dimension, DimensionReport>,
    /// Utterances excluded upstream, before any table was built.
    pub excluded: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageReport>,
}

/// Correlates each prediction table with the labels over the id intersection.
pub fn evaluate_run(
    config_id: impl Into<String>,
    predictions: &[ScoreTable],
    labels: &LabelSet,
    excluded: usize,
) -> EvalReport {
    let mut dimensions = BTreeMap::new();
    for table in predictions {
        let gold = labels.table(table.dimension);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (id, &p) in &table.entries {
            if let Some(l) = gold.get(id) {
                x.push(p);
                y.push(l);
            }
        }
        let n = x.len();
        let (pcc, error) = match pearson(&x, &y) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e)),
        };
        dimensions.insert(
            table.dimension,
            DimensionReport {
                pcc,
                error,
                n,
                missing_predictions: gold.len() - n,
                missing_labels: table.len() - n,
            },
        );
    }
    EvalReport {
        config_id: config_id.into(),
        dimensions,
        excluded,
        coverage: None,
    }
}

/// Renders reports as an aligned text table, one row per report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let dims: Vec<Dimension> = Dimension::ALL
        .into_iter()
        .filter(|d| reports.iter().any(|r| r.dimensions.contains_key(d)))
        .collect();
    let mut header = vec!["config".to_string()];
    header.extend(dims.iter().map(|d| d.as_str().to_string()));
    header.extend(["n".to_string(), "missing".to_string(), "excluded".to_string()]);
    let mut rows = vec![header];
    for r in reports {
        let mut row = vec![r.config_id.clone()];
        for d in &dims {
            row.push(match r.dimensions.get(d) {
                Some(DimensionReport { pcc: Some(p), .. }) => format!("{p:.3}"),
                Some(DimensionReport { error: Some(e), .. }) => match e {
                    PearsonError::ZeroVariance { .. } => "zero-var".into(),
                    PearsonError::TooFewPoints { .. } => "too-few".into(),
                    PearsonError::LengthMismatch { .. } => "error".into(),
                },
                _ => "-".into(),
            });
        }
        let n = r.dimensions.values().map(|d| d.n).max().unwrap_or(0);
        let missing = r.dimensions.values().map(|d| d.missing_predictions).max().unwrap_or(0);
        row.extend([n.to_string(), missing.to_string(), r.excluded.to_string()]);
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[c]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasonCategory {
    Hallucination,
    Correct,
    Constructive,
    Irrelevant,
}

impl ReasonCategory {
    pub const ALL: [ReasonCategory; 4] = [
        ReasonCategory::Hallucination,
        ReasonCategory::Correct,
        ReasonCategory::Constructive,
        ReasonCategory::Irrelevant,
    ];
}

/// A labeled stretch of reasoning text. When `token_count` is absent it is
/// the whitespace-token count of `text`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasonSpan {
    pub category: ReasonCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl ReasonSpan {
    pub fn counted(category: ReasonCategory, token_count: u64) -> Self {
        Self {
            category,
            token_count: Some(token_count),
            text: None,
        }
    }

    pub fn tokens(&self) -> u64 {
        match (self.token_count, &self.text) {
            (Some(n), _) => n,
            (None, Some(t)) => t.split_whitespace().count() as u64,
            (None, None) => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningAnnotation {
    pub utt_id: String,
    pub dimension: Dimension,
    pub spans: Vec<ReasonSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub tokenization: String,
    pub proportions: BTreeMap<Dimension, BTreeMap<ReasonCategory, f64>>,
    pub token_totals: BTreeMap<Dimension, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("no annotations")]
    EmptyAnnotations,
}

pub const COVERAGE_TOKENIZATION: &str = "whitespace-delimited tokens";

/// Per dimension, each category's share of annotated tokens.
pub fn reasoning_coverage(annotations: &[ReasoningAnnotation]) -> Result<CoverageReport, CoverageError> {
    if annotations.is_empty() {
        return Err(CoverageError::EmptyAnnotations);
    }
    let mut sums: BTreeMap<Dimension, BTreeMap<ReasonCategory, u64>> = BTreeMap::new();
    for a in annotations {
        let per = sums
            .entry(a.dimension)
            .or_insert_with(|| ReasonCategory::ALL.iter().map(|c| (*c, 0)).collect());
        for span in &a.spans {
            *per.get_mut(&span.category).unwrap() += span.tokens();
        }
    }
    let mut proportions = BTreeMap::new();
    let mut token_totals = BTreeMap::new();
    for (dim, per) in sums {
        let total: u64 = per.values().sum();
        token_totals.insert(dim, total);
        let props = per
            .into_iter()
            .map(|(c, n)| (c, if total == 0 { 0.0 } else { n as f64 / total as f64 }))
            .collect();
        proportions.insert(dim, props);
    }
    Ok(CoverageReport {
        tokenization: COVERAGE_TOKENIZATION.into(),
        proportions,
        token_totals,
    })
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<ReasoningAnnotation>, JsonlError> {
    read_jsonl_file(path)
}

pub fn render_coverage(report: &CoverageReport) -> String {
    let mut out = format!("{:<10}", "dimension");
    for c in ReasonCategory::ALL {
        let name = serde_json::to_value(c).unwrap();
        let _ = write!(out, "  {:>13}", name.as_str().unwrap());
    }
    let _ = writeln!(out, "  {:>6}", "tokens");
    for (dim, props) in &report.proportions {
        let _ = write!(out, "{:<10}", dim.as_str());
        for c in ReasonCategory::ALL {
            let _ = write!(out, "  {:>13.3}", props[&c]);
        }
        let _ = writeln!(out, "  {:>6}", report.token_totals[dim]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1., 2., 3.], &[2., 4., 6.]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1., 2., 3.], &[3., 2., 1.]).unwrap() + 1.0).abs() < 1e-12);
        // deviations (-1,0,1) and (-1,1,0): cov 1/2, variances 1 each
        assert!((pearson(&[1., 2., 3.], &[1., 3., 2.]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pearson_errors() {
        assert_eq!(pearson(&[1., 2.], &[1.]), Err(PearsonError::LengthMismatch { x: 2, y: 1 }));
        assert_eq!(pearson(&[1.], &[1.]), Err(PearsonError::TooFewPoints { n: 1 }));
        assert_eq!(pearson(&[2., 2.], &[1., 3.]), Err(PearsonError::ZeroVariance { side: Side::X }));
        assert_eq!(pearson(&[1., 3.], &[2., 2.]), Err(PearsonError::ZeroVariance { side: Side::Y }));
    }

    fn labels() -> LabelSet {
        let recs = (0..5)
            .map(|i| LabelRecord {
                utt_id: format!("u{i}"),
                accuracy: i as f64,
                fluency: (i * i) as f64,
                prosody: None,
            })
            .collect();
        LabelSet::from_records(recs, "0-10").unwrap()
    }

    #[test]
    fn evaluate_identical_and_constant() {
        let l = labels();
        let preds = [l.table(Dimension::Accuracy), l.table(Dimension::Fluency)];
        let rep = evaluate_run("id", &preds, &l, 0);
        for d in rep.dimensions.values() {
            assert!((d.pcc.unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(d.n, 5);
        }
        let constant = ScoreTable::from_entries(Dimension::Accuracy, (0..5).map(|i| (format!("u{i}"), 3.0)));
        let rep = evaluate_run("c", &[constant], &l, 0);
        assert_eq!(
            rep.dimensions[&Dimension::Accuracy].error,
            Some(PearsonError::ZeroVariance { side: Side::X })
        );
    }

    #[test]
    fn evaluate_counts_missing() {
        let l = labels();
        let mut t = l.table(Dimension::Accuracy).restricted_to(["u0", "u1", "u2"]);
        t.insert("extra", 1.0);
        let rep = evaluate_run("m", &[t], &l, 2);
        let d = &rep.dimensions[&Dimension::Accuracy];
        assert_eq!((d.n, d.missing_predictions, d.missing_labels), (3, 2, 1));
        assert_eq!(rep.excluded, 2);
        let text = render_table(&[rep]);
        assert!(text.starts_with("config  accuracy  n  missing  excluded\n"), "{text}");
    }

    #[test]
    fn duplicate_labels_rejected() {
        let r = LabelRecord {
            utt_id: "a".into(),
            accuracy: 1.0,
            fluency: 1.0,
            prosody: None,
        };
        assert!(matches!(
            LabelSet::from_records(vec![r.clone(), r], ""),
            Err(LabelError::Duplicate(_))
        ));
    }

    #[test]
    fn coverage_examples() {
        use ReasonCategory::*;
        let one = ReasoningAnnotation {
            utt_id: "a".into(),
            dimension: Dimension::Accuracy,
            spans: vec![ReasonSpan::counted(Correct, 7)],
        };
        let rep = reasoning_coverage(&[one]).unwrap();
        let p = &rep.proportions[&Dimension::Accuracy];
        assert_eq!(p[&Correct], 1.0);
        assert_eq!(p[&Hallucination] + p[&Constructive] + p[&Irrelevant], 0.0);

        let even = ReasoningAnnotation {
            utt_id: "b".into(),
            dimension: Dimension::Fluency,
            spans: ReasonCategory::ALL.iter().map(|c| ReasonSpan::counted(*c, 5)).collect(),
        };
        let rep = reasoning_coverage(&[even]).unwrap();
        assert!(rep.proportions[&Dimension::Fluency].values().all(|&v| v == 0.25));
        assert_eq!(reasoning_coverage(&[]), Err(CoverageError::EmptyAnnotations));
    }

    #[test]
    fn span_text_is_whitespace_tokenized() {
        let s: ReasonSpan = serde_json::from_str(r#"{"category":"constructive","text":"  calls us  is heard as cars "}"#).unwrap();
        assert_eq!(s.tokens(), 6);
    }

    proptest! {
        #[test]
        fn pearson_affine_invariant(
            xy in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..30),
            a in 0.1f64..10.0,
            b in -20.0f64..20.0,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
            if let Ok(r) = pearson(&x, &y) {
                let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                prop_assert!((pearson(&xs, &y).unwrap() - r).abs() < 1e-12);
                prop_assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
                prop_assert!(r.abs() <= 1.0);
            }
        }

        #[test]
        fn coverage_sums_to_one(
            spans in prop::collection::vec((0usize..4, 0u64..50, any::<bool>()), 1..20)
        ) {
            let anns: Vec<ReasoningAnnotation> = spans
                .iter()
                .map(|&(c, n, acc)| ReasoningAnnotation {
                    utt_id: "x".into(),
                    dimension: if acc { Dimension::Accuracy } else { Dimension::Fluency },
                    spans: vec![ReasonSpan::counted(ReasonCategory::ALL[c], n)],
                })
                .collect();
            let rep = reasoning_coverage(&anns).unwrap();
            for (dim, props) in &rep.proportions {
                if rep.token_totals[dim] > 0 {
                    prop_assert!((props.values().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
