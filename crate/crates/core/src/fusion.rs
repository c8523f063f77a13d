//! Per-run score tables: min-max normalization, match-score refinement of
//! LLM accuracy, and averaging with an external model's predictions.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{read_jsonl_file, JsonlError};
use crate::dimension::Dimension;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub dimension: Dimension,
    pub entries: BTreeMap<String, f64>,
    #[serde(default)]
    pub scale_note: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("score table is empty")]
    EmptyTable,
    #[error("utterance ids differ: only in first {only_in_first:?}, only in second {only_in_second:?}")]
    IdMismatch {
        only_in_first: Vec<String>,
        only_in_second: Vec<String>,
    },
    #[error("dimension mismatch: {first} vs {second}")]
    DimensionMismatch { first: Dimension, second: Dimension },
    #[error("non-finite score for `{0}`")]
    NonFinite(String),
}

impl ScoreTable {
    pub fn new(dimension: Dimension, scale_note: impl Into<String>) -> Self {
        Self {
            dimension,
            entries: BTreeMap::new(),
            scale_note: scale_note.into(),
        }
    }

    pub fn from_entries<I, K>(dimension: Dimension, entries: I) -> Self
    where
        I: IntoIterator<Item = (K, f64)>,
        K: Into<String>,
    {
        Self {
            dimension,
            entries: entries.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            scale_note: String::new(),
        }
    }

    pub fn insert(&mut self, utt_id: impl Into<String>, value: f64) {
        self.entries.insert(utt_id.into(), value);
    }

    pub fn get(&self, utt_id: &str) -> Option<f64> {
        self.entries.get(utt_id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn check_finite(&self) -> Result<(), FusionError> {
        match self.entries.iter().find(|(_, v)| !v.is_finite()) {
            Some((id, _)) => Err(FusionError::NonFinite(id.clone())),
            None => Ok(()),
        }
    }

    /// Keeps only the given ids.
    pub fn restricted_to<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Self {
        let keep: BTreeSet<&str> = ids.into_iter().collect();
        Self {
            dimension: self.dimension,
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| keep.contains(k.as_str()))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
            scale_note: self.scale_note.clone(),
        }
    }
}

fn id_mismatch(a: &ScoreTable, b: &ScoreTable) -> Option<FusionError> {
    let (ia, ib) = (a.ids(), b.ids());
    if ia == ib {
        return None;
    }
    Some(FusionError::IdMismatch {
        only_in_first: ia.difference(&ib).map(|s| s.to_string()).collect(),
        only_in_second: ib.difference(&ia).map(|s| s.to_string()).collect(),
    })
}

fn check_dimension(a: &ScoreTable, b: &ScoreTable) -> Result<(), FusionError> {
    if a.dimension != b.dimension {
        return Err(FusionError::DimensionMismatch {
            first: a.dimension,
            second: b.dimension,
        });
    }
    Ok(())
}

/// Maps each value to `(v - min) / (max - min)`; a constant table maps to 0.5.
pub fn min_max_normalize(table: &ScoreTable) -> Result<ScoreTable, FusionError> {
    if table.is_empty() {
        return Err(FusionError::EmptyTable);
    }
    table.check_finite()?;
    let min = table.entries.values().copied().fold(f64::INFINITY, f64::min);
    let max = table.entries.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let entries = table
        .entries
        .iter()
        .map(|(k, &v)| {
            let n = if range > 0.0 { ((v - min) / range).clamp(0.0, 1.0) } else { 0.5 };
            (k.clone(), n)
        })
        .collect();
    Ok(ScoreTable {
        dimension: table.dimension,
        entries,
        scale_note: format!("min-max normalized over {} utterances", table.len()),
    })
}

/// Averages normalized LLM accuracy with normalized match similarity.
/// Utterances with no match score keep their normalized LLM score.
pub fn refine_accuracy(llm: &ScoreTable, matches: &ScoreTable) -> Result<ScoreTable, FusionError> {
    check_dimension(llm, matches)?;
    let extra: Vec<String> = matches
        .entries
        .keys()
        .filter(|k| !llm.entries.contains_key(*k))
        .cloned()
        .collect();
    if !extra.is_empty() {
        return Err(FusionError::IdMismatch {
            only_in_first: Vec::new(),
            only_in_second: extra,
        });
    }
    let llm_n = min_max_normalize(llm)?;
    let match_n = if matches.is_empty() {
        ScoreTable::new(matches.dimension, "")
    } else {
        min_max_normalize(matches)?
    };
    let mut fallback = Vec::new();
    let entries = llm_n
        .entries
        .iter()
        .map(|(id, &l)| {
            let v = match match_n.get(id) {
                Some(m) => 0.5 * (l + m),
                None => {
                    fallback.push(id.clone());
                    l
                }
            };
            (id.clone(), v)
        })
        .collect();
    let mut scale_note = "mean of normalized llm score and normalized match similarity".to_string();
    if !fallback.is_empty() {
        scale_note.push_str(&format!("; llm score only for {}", fallback.join(",")));
    }
    Ok(ScoreTable {
        dimension: llm.dimension,
        entries,
        scale_note,
    })
}

/// Normalizes both tables independently and averages them per utterance.
pub fn fuse_models(a: &ScoreTable, b: &ScoreTable) -> Result<ScoreTable, FusionError> {
    check_dimension(a, b)?;
    if let Some(e) = id_mismatch(a, b) {
        return Err(e);
    }
    let (na, nb) = (min_max_normalize(a)?, min_max_normalize(b)?);
    let entries = na
        .entries
        .iter()
        .map(|(id, &x)| (id.clone(), 0.5 * (x + nb.entries[id])))
        .collect();
    Ok(ScoreTable {
        dimension: a.dimension,
        entries,
        scale_note: "mean of two independently min-max normalized tables".into(),
    })
}

/// One line of an external model's score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScore {
    pub utt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prosody: Option<f64>,
}

impl ExternalScore {
    pub fn score(&self, dim: Dimension) -> Option<f64> {
        match dim {
            Dimension::Accuracy => self.accuracy,
            Dimension::Fluency => self.fluency,
            Dimension::Prosody => self.prosody,
        }
    }
}

/// Splits external score records into one table per dimension present.
pub fn external_tables(records: &[ExternalScore]) -> BTreeMap<Dimension, ScoreTable> {
    let mut out = BTreeMap::new();
    for dim in Dimension::ALL {
        let mut table = ScoreTable::new(dim, "external model");
        for r in records {
            if let Some(v) = r.score(dim) {
                table.insert(r.utt_id.clone(), v);
            }
        }
        if !table.is_empty() {
            out.insert(dim, table);
        }
    }
    out
}

pub fn load_external_scores(path: impl AsRef<Path>) -> Result<Vec<ExternalScore>, JsonlError> {
    read_jsonl_file(path)
}
