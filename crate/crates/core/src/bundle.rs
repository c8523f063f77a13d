//! Cue bundles: the per-utterance textual description of speech, stored one
//! JSON object per line in a manifest.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phoneme::{CmuSequence, IpaSequence};
use crate::prompt::TobiAnnotation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CueBundle {
    pub utt_id: String,
    pub transcript: String,
    /// Space-separated IPA tokens.
    pub ipa_recognized: IpaSequence,
    /// ARPABET phones with inline `(Xs pause)` annotations.
    pub cmu_recognized: CmuSequence,
    /// Canonical IPA supplied by the extractor; overrides dictionary mapping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical_ipa: Option<IpaSequence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tobi: Option<TobiAnnotation>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub source_meta: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unintelligible: bool,
}

impl CueBundle {
    pub fn new(utt_id: impl Into<String>, transcript: impl Into<String>) -> Self {
        Self {
            utt_id: utt_id.into(),
            transcript: transcript.into(),
            ipa_recognized: IpaSequence::default(),
            cmu_recognized: CmuSequence::default(),
            canonical_ipa: None,
            tobi: None,
            source_meta: BTreeMap::new(),
            unintelligible: false,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.utt_id.trim().is_empty() {
            return Err("utt_id is empty".into());
        }
        if self.transcript.trim().is_empty() && !self.unintelligible {
            return Err("empty transcript must be flagged unintelligible".into());
        }
        if let Some(tobi) = &self.tobi {
            tobi.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
}

/// Reads JSON Lines, skipping blank lines. Errors carry 1-based line numbers.
pub fn read_jsonl<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| JsonlError::Io {
            path: "<stream>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| JsonlError::Record {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn read_jsonl_file<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, JsonlError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_jsonl(std::io::BufReader::new(file))
}

pub fn write_jsonl<T: Serialize>(mut writer: impl Write, records: &[T]) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl_string<T: Serialize>(records: &[T]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestIssue {
    /// 1-based line number, 0 when not tied to a line.
    pub line: usize,
    pub utt_id: Option<String>,
    pub message: String,
}

/// Schema-checks a manifest: every line parses, every bundle validates, and
/// utterance ids are unique. Returns the bundles that passed.
pub fn validate_manifest(reader: impl BufRead) -> (Vec<CueBundle>, Vec<ManifestIssue>) {
    let mut bundles = Vec::new();
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                issues.push(ManifestIssue {
                    line: line_no,
                    utt_id: None,
                    message: e.to_string(),
                });
                break;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        let bundle: CueBundle = match serde_json::from_str(&line) {
            Ok(b) => b,
            Err(e) => {
                issues.push(ManifestIssue {
                    line: line_no,
                    utt_id: None,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if let Err(message) = bundle.validate() {
            issues.push(ManifestIssue {
                line: line_no,
                utt_id: Some(bundle.utt_id.clone()),
                message,
            });
            continue;
        }
        if !seen.insert(bundle.utt_id.clone()) {
            issues.push(ManifestIssue {
                line: line_no,
                utt_id: Some(bundle.utt_id.clone()),
                message: "duplicate utt_id".into(),
            });
            continue;
        }
        bundles.push(bundle);
    }
    (bundles, issues)
}
