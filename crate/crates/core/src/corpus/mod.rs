//! Report ingestion: tokenization with case/repetition marker tokens,
//! frequency-cutoff vocabulary, index encoding, dataset splits, and the
//! synthetic corpus generator used for desk-scale experiments.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod split;
pub mod synth;
mod tokenize;
mod vocab;

pub use split::{split, SplitSpec};
pub use synth::{generate_synthetic_corpus, recover_labels, ClassSpec, SynthConfig};
pub use tokenize::{detokenize, tokenize, BOS, EOS, PAD, REP, UNK, UP};
pub use vocab::{Vocabulary, BOS_IDX, EOS_IDX, NUM_SPECIALS, PAD_IDX, REP_IDX, UNK_IDX, UP_IDX};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid split fractions: sum is {0}, expected 1.0")]
    BadFractions(f64),
    #[error("duplicate report id '{0}'")]
    DuplicateId(String),
    #[error("{0}")]
    Invalid(String),
    #[error("corpus line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// One clinical-style document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub text: String,
}

/// A report with per-class binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledReport {
    pub id: String,
    pub text: String,
    pub labels: BTreeMap<String, u8>,
}

impl LabeledReport {
    pub fn report(&self) -> Report {
        Report {
            id: self.id.clone(),
            text: self.text.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Binary,
    Multilabel,
}

/// Named classification task: ordered class list plus binary/multilabel kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSchema {
    pub name: String,
    pub classes: Vec<String>,
    pub kind: TaskKind,
}

impl TaskSchema {
    pub fn new(name: &str, classes: Vec<String>, kind: TaskKind) -> Result<TaskSchema> {
        match kind {
            TaskKind::Binary if classes.len() != 1 => {
                return Err(CorpusError::Invalid(format!(
                    "binary schema '{name}' must have exactly one class, got {}",
                    classes.len()
                )))
            }
            TaskKind::Multilabel if classes.len() < 2 => {
                return Err(CorpusError::Invalid(format!(
                    "multilabel schema '{name}' needs at least 2 classes, got {}",
                    classes.len()
                )))
            }
            _ => {}
        }
        Ok(TaskSchema {
            name: name.to_string(),
            classes,
            kind,
        })
    }

    /// Checks a label map has exactly this schema's keys.
    pub fn validate_labels(&self, labels: &BTreeMap<String, u8>) -> Result<()> {
        let missing: Vec<&String> = self
            .classes
            .iter()
            .filter(|c| !labels.contains_key(*c))
            .collect();
        let extra: Vec<&String> = labels
            .keys()
            .filter(|k| !self.classes.contains(k))
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(CorpusError::Invalid(format!(
                "labels do not match schema '{}': missing {missing:?}, unexpected {extra:?}",
                self.name
            )));
        }
        Ok(())
    }

    /// Ordered label row for one report.
    pub fn label_row(&self, labels: &BTreeMap<String, u8>) -> Result<Vec<u8>> {
        self.validate_labels(labels)?;
        Ok(self.classes.iter().map(|c| labels[c]).collect())
    }
}

/// JSON-lines corpus parsing: one `{"id", "text", "labels"?}` object per line.
#[derive(Debug, Deserialize, Serialize)]
struct ReportLine {
    id: String,
    text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<BTreeMap<String, u8>>,
}

pub fn parse_jsonl(content: &str) -> Result<Vec<LabeledReport>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ReportLine =
            serde_json::from_str(line).map_err(|source| CorpusError::Parse { line: i + 1, source })?;
        if rec.id.is_empty() {
            return Err(CorpusError::Invalid(format!("empty report id on line {}", i + 1)));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(CorpusError::DuplicateId(rec.id));
        }
        out.push(LabeledReport {
            id: rec.id,
            text: rec.text,
            labels: rec.labels.unwrap_or_default(),
        });
    }
    Ok(out)
}

pub fn to_jsonl(reports: &[LabeledReport], with_labels: bool) -> String {
    let mut out = String::new();
    for r in reports {
        let line = ReportLine {
            id: r.id.clone(),
            text: r.text.clone(),
            labels: if with_labels && !r.labels.is_empty() {
                Some(r.labels.clone())
            } else {
                None
            },
        };
        out.push_str(&serde_json::to_string(&line).expect("report serializes"));
        out.push('\n');
    }
    out
}
