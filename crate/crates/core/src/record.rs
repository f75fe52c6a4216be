//! Record and batch data model: JSONL ingestion, validation, and
//! score-orientation normalization.
//!
//! Every score column is stored higher-is-better. Columns whose raw
//! convention is lower-is-better (e.g. error-style quality metrics) are
//! negated once, at ingestion, so ranking code never has to carry signs
//! around.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One source segment with its hypotheses, scores, and token lengths.
///
/// Optional fields are absent until populated by scoring or by a richer
/// dataset; absence is represented as `None`, never as a sentinel number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationRecord {
    /// Unique identifier within a batch.
    pub id: String,
    /// Language pair tag, e.g. "en-ja". Informational only.
    #[serde(default)]
    pub lang_pair: String,
    /// Source text. May be empty only when `src_token_len` is provided.
    #[serde(default)]
    pub source: String,
    /// Small-model translation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyp_small: Option<String>,
    /// Large-model translation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyp_large: Option<String>,
    /// QE score of the small-model hypothesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qe_small: Option<f64>,
    /// QE score of the large-model hypothesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qe_large: Option<f64>,
    /// Evaluation-metric score of the small-model hypothesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_small: Option<f64>,
    /// Evaluation-metric score of the large-model hypothesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_large: Option<f64>,
    /// Sum of token log-probabilities of `hyp_small`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprob_small: Option<f64>,
    /// Token count of `hyp_small`. Required whenever `logprob_small` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyp_token_len: Option<u64>,
    /// Token count of the source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_token_len: Option<u64>,
}

impl TranslationRecord {
    /// A record carrying only an id, lang pair, and source text.
    pub fn new(id: impl Into<String>, lang_pair: impl Into<String>, source: impl Into<String>) -> Self {
        TranslationRecord {
            id: id.into(),
            lang_pair: lang_pair.into(),
            source: source.into(),
            hyp_small: None,
            hyp_large: None,
            qe_small: None,
            qe_large: None,
            quality_small: None,
            quality_large: None,
            logprob_small: None,
            hyp_token_len: None,
            src_token_len: None,
        }
    }

    /// Checks the per-record invariants, returning a human-readable reason
    /// on the first violation.
    fn check(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("record id must be non-empty".to_string());
        }
        if self.source.is_empty() && self.src_token_len.is_none() {
            return Err("source may be empty only when src_token_len is provided".to_string());
        }
        for column in ScoreColumn::ALL {
            if let Some(value) = column.get(self) {
                if !value.is_finite() {
                    return Err(format!("{} must be finite, got {value}", column.name()));
                }
            }
        }
        if self.hyp_token_len == Some(0) {
            return Err("hyp_token_len must be at least 1".to_string());
        }
        if self.src_token_len == Some(0) {
            return Err("src_token_len must be at least 1".to_string());
        }
        if self.logprob_small.is_some() && self.hyp_token_len.is_none() {
            return Err("logprob_small requires hyp_token_len".to_string());
        }
        Ok(())
    }
}

/// The real-valued score columns of a [`TranslationRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreColumn {
    QeSmall,
    QeLarge,
    QualitySmall,
    QualityLarge,
    LogprobSmall,
}

impl ScoreColumn {
    pub const ALL: [ScoreColumn; 5] = [
        ScoreColumn::QeSmall,
        ScoreColumn::QeLarge,
        ScoreColumn::QualitySmall,
        ScoreColumn::QualityLarge,
        ScoreColumn::LogprobSmall,
    ];

    /// The JSONL field name of the column.
    pub fn name(self) -> &'static str {
        match self {
            ScoreColumn::QeSmall => "qe_small",
            ScoreColumn::QeLarge => "qe_large",
            ScoreColumn::QualitySmall => "quality_small",
            ScoreColumn::QualityLarge => "quality_large",
            ScoreColumn::LogprobSmall => "logprob_small",
        }
    }

    /// Reads this column from a record.
    pub fn get(self, record: &TranslationRecord) -> Option<f64> {
        match self {
            ScoreColumn::QeSmall => record.qe_small,
            ScoreColumn::QeLarge => record.qe_large,
            ScoreColumn::QualitySmall => record.quality_small,
            ScoreColumn::QualityLarge => record.quality_large,
            ScoreColumn::LogprobSmall => record.logprob_small,
        }
    }

    fn slot(self, record: &mut TranslationRecord) -> &mut Option<f64> {
        match self {
            ScoreColumn::QeSmall => &mut record.qe_small,
            ScoreColumn::QeLarge => &mut record.qe_large,
            ScoreColumn::QualitySmall => &mut record.quality_small,
            ScoreColumn::QualityLarge => &mut record.quality_large,
            ScoreColumn::LogprobSmall => &mut record.logprob_small,
        }
    }
}

impl fmt::Display for ScoreColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScoreColumn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScoreColumn::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown score column \"{s}\" (expected one of qe_small, qe_large, quality_small, quality_large, logprob_small)"))
    }
}

/// Whether larger raw values of a column mean better translations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreDirection {
    #[default]
    HigherBetter,
    LowerBetter,
}

/// Declares the raw convention of one score column at ingestion time.
/// Lower-is-better columns are negated on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOrientation {
    pub column: ScoreColumn,
    pub direction: ScoreDirection,
}

impl ScoreOrientation {
    pub fn lower_better(column: ScoreColumn) -> Self {
        ScoreOrientation { column, direction: ScoreDirection::LowerBetter }
    }
}

/// A small/large column pair realized by a cascade decision: the small
/// column scores kept records, the large column scores deferred ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ColumnPair {
    pub small: ScoreColumn,
    pub large: ScoreColumn,
}

impl ColumnPair {
    /// Evaluation-metric scores (`quality_small` / `quality_large`).
    pub const QUALITY: ColumnPair = ColumnPair {
        small: ScoreColumn::QualitySmall,
        large: ScoreColumn::QualityLarge,
    };
    /// QE scores (`qe_small` / `qe_large`).
    pub const QE: ColumnPair = ColumnPair {
        small: ScoreColumn::QeSmall,
        large: ScoreColumn::QeLarge,
    };
}

impl std::str::FromStr for ColumnPair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quality" => Ok(ColumnPair::QUALITY),
            "qe" => Ok(ColumnPair::QE),
            other => Err(format!("unknown column pair \"{other}\" (expected \"quality\" or \"qe\")")),
        }
    }
}

/// Ordered collection of records for one test set and language pair.
///
/// Immutable after construction; record order is stable and index-based
/// tie-breaking in the deferral rules depends on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    name: String,
    records: Vec<TranslationRecord>,
}

/// Construction-time violations of the batch invariants.
#[derive(Debug, Error, PartialEq)]
pub enum BatchError {
    #[error("duplicate record id \"{id}\"")]
    DuplicateId { id: String },
    #[error("record \"{id}\": {reason}")]
    InvalidRecord { id: String, reason: String },
}

impl Batch {
    /// Validates the records (unique ids, finite scores, token-length and
    /// pairing rules) and freezes them in order.
    pub fn new(name: impl Into<String>, records: Vec<TranslationRecord>) -> Result<Self, BatchError> {
        let mut seen = HashSet::new();
        for record in &records {
            record.check().map_err(|reason| BatchError::InvalidRecord {
                id: record.id.clone(),
                reason,
            })?;
            if !seen.insert(record.id.clone()) {
                return Err(BatchError::DuplicateId { id: record.id.clone() });
            }
        }
        Ok(Batch { name: name.into(), records })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn records(&self) -> &[TranslationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Extracts one column for every record, failing on the first record
    /// where it is absent.
    pub fn column_values(&self, column: ScoreColumn) -> Result<Vec<f64>, MissingColumn> {
        self.records
            .iter()
            .map(|r| {
                column.get(r).ok_or_else(|| MissingColumn {
                    id: r.id.clone(),
                    column: column.name(),
                })
            })
            .collect()
    }

    /// Serializes the batch back to JSONL, one record per line, in order.
    pub fn to_jsonl(&self) -> Result<String, serde_json::Error> {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// A record lacks a column an operation needs.
#[derive(Debug, Error, PartialEq)]
#[error("record \"{id}\" is missing column {column}")]
pub struct MissingColumn {
    pub id: String,
    pub column: &'static str,
}

/// Errors raised while loading a JSONL batch file.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{name} line {line}: {message}")]
    Parse { name: String, line: usize, message: String },
    #[error("{name} line {line}: {source}")]
    Invalid {
        name: String,
        line: usize,
        #[source]
        source: BatchError,
    },
}

/// Loads a JSONL batch file, applying orientation normalization so that
/// every declared lower-is-better column is negated in the result.
///
/// Record order follows file order. Blank lines are skipped. The batch
/// name is the file stem.
pub fn load_batch(path: &Path, orientations: &[ScoreOrientation]) -> Result<Batch, LoadError> {
    let file = File::open(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    load_batch_from_reader(BufReader::new(file), &name, orientations)
}

/// As [`load_batch`], over any buffered reader.
pub fn load_batch_from_reader<R: BufRead>(
    reader: R,
    name: &str,
    orientations: &[ScoreOrientation],
) -> Result<Batch, LoadError> {
    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| LoadError::Io { path: name.to_string(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: TranslationRecord =
            serde_json::from_str(&line).map_err(|e| LoadError::Parse {
                name: name.to_string(),
                line: line_no,
                message: e.to_string(),
            })?;
        for orientation in orientations {
            if orientation.direction == ScoreDirection::LowerBetter {
                if let Some(value) = orientation.column.slot(&mut record) {
                    *value = -*value;
                }
            }
        }
        record.check().map_err(|reason| LoadError::Invalid {
            name: name.to_string(),
            line: line_no,
            source: BatchError::InvalidRecord { id: record.id.clone(), reason },
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(LoadError::Invalid {
                name: name.to_string(),
                line: line_no,
                source: BatchError::DuplicateId { id: record.id.clone() },
            });
        }
        records.push(record);
    }
    // record checks and id uniqueness were enforced line by line above
    Ok(Batch { name: name.to_string(), records })
}
