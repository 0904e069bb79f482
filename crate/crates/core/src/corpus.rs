//! Image corpus manifest: records, quality buckets, splits, proxy scores.
//!
//! A manifest is line-delimited JSON, one record per line — diffable,
//! streamable, and trivially generated by any upstream tool. Bucket labels
//! and the optional human flag are inputs; nothing here runs a detector.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Quality bucket of a corpus image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Studio,
    UgcGood,
    UgcBad,
}

/// Dataset split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

/// One corpus image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub path: String,
    pub bucket: Bucket,
    pub style_id: String,
    /// Whether a person is visible; `None` = unknown (record is then
    /// excluded from the human-split pair classes only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub has_human: Option<bool>,
    pub upvotes: u64,
    pub downvotes: u64,
    pub split: Split,
}

/// An ordered collection of records with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<ImageRecord>,
    pub source_uri: String,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Validation { line: usize, msg: String },
    #[error("line {line}: duplicate id \"{id}\"")]
    DuplicateId { line: usize, id: String },
    #[error("record \"{id}\": proxy score undefined (upvotes + downvotes = 0)")]
    UndefinedProxyScore { id: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Options for [`load_manifest`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Accept unknown fields instead of rejecting them.
    pub lenient: bool,
    /// Permit two records to reference the same image path.
    pub allow_shared_paths: bool,
}

const KNOWN_FIELDS: [&str; 8] = [
    "id",
    "path",
    "bucket",
    "style_id",
    "has_human",
    "upvotes",
    "downvotes",
    "split",
];

/// Parses a line-delimited JSON manifest. Order is preserved; blank lines are
/// skipped; ids must be unique.
pub fn load_manifest(
    reader: impl BufRead,
    source_uri: &str,
    opts: LoadOptions,
) -> Result<Manifest, CorpusError> {
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    let mut paths = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
        let obj = value.as_object().ok_or_else(|| CorpusError::Parse {
            line: line_no,
            msg: "record must be a JSON object".into(),
        })?;
        if !opts.lenient {
            if let Some(unknown) = obj.keys().find(|k| !KNOWN_FIELDS.contains(&k.as_str())) {
                return Err(CorpusError::Validation {
                    line: line_no,
                    msg: format!("unknown field \"{unknown}\" (use lenient mode to accept)"),
                });
            }
        }
        let record: ImageRecord =
            serde_json::from_value(value).map_err(|e| CorpusError::Validation {
                line: line_no,
                msg: e.to_string(),
            })?;
        if !ids.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: line_no,
                id: record.id,
            });
        }
        if !paths.insert(record.path.clone()) && !opts.allow_shared_paths {
            return Err(CorpusError::Validation {
                line: line_no,
                msg: format!(
                    "path \"{}\" referenced by more than one record",
                    record.path
                ),
            });
        }
        records.push(record);
    }
    Ok(Manifest {
        records,
        source_uri: source_uri.to_string(),
    })
}

/// Writes a manifest back out as line-delimited JSON.
pub fn save_manifest(manifest: &Manifest, mut writer: impl Write) -> Result<(), CorpusError> {
    for record in &manifest.records {
        let line = serde_json::to_string(record).expect("record serialization is infallible");
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// The vote-derived proxy quality score `u / (u + d)`.
///
/// Undefined (error) when the record carries no votes; such records are fine
/// in train/val but must not enter a test set.
pub fn proxy_score(record: &ImageRecord) -> Result<f64, CorpusError> {
    let total = record.upvotes + record.downvotes;
    if total == 0 {
        return Err(CorpusError::UndefinedProxyScore {
            id: record.id.clone(),
        });
    }
    Ok(record.upvotes as f64 / total as f64)
}

/// Records matching `split`, order preserved.
pub fn filter_split(manifest: &Manifest, split: Split) -> Manifest {
    Manifest {
        records: manifest
            .records
            .iter()
            .filter(|r| r.split == split)
            .cloned()
            .collect(),
        source_uri: manifest.source_uri.clone(),
    }
}
