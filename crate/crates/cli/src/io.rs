//! Shared file plumbing: corpus loading, vocabulary round-trips, metric and
//! ROC table rendering, and container (de)serialization of language models.

use std::collections::BTreeMap;
use std::path::Path;

use relm_core::container::ModelContainer;
use relm_core::corpus::{parse_jsonl, tokenize, LabeledReport, TaskSchema, Vocabulary};
use relm_core::finetune::LabeledExample;
use relm_core::langmodel::{LanguageModel, LmConfig};
use relm_core::metrics::RocPoint;

use crate::error::{io_at, CliError, Result};

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_at(path, e))
}

pub fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| io_at(path, e))
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| io_at(path, e))
}

pub fn load_corpus(path: &Path) -> Result<Vec<LabeledReport>> {
    let content = read_file(path)?;
    let reports = parse_jsonl(&content)?;
    if reports.is_empty() {
        return Err(CliError::Validation(format!(
            "corpus {} contains no reports",
            path.display()
        )));
    }
    Ok(reports)
}

pub fn load_vocabulary(path: &Path) -> Result<Vocabulary> {
    let content = read_file(path)?;
    Ok(Vocabulary::from_json(&content)?)
}

/// Tokenizes and index-encodes one report body.
pub fn encode_text(vocab: &Vocabulary, text: &str) -> Vec<usize> {
    vocab.encode(&tokenize(text))
}

/// Builds schema-ordered labeled examples, naming the offending report on
/// label mismatches.
pub fn labeled_examples(
    reports: &[LabeledReport],
    vocab: &Vocabulary,
    schema: &TaskSchema,
) -> Result<Vec<LabeledExample>> {
    reports
        .iter()
        .map(|r| {
            let labels = schema.label_row(&r.labels).map_err(|e| {
                CliError::Validation(format!("report '{}': {e}", r.id))
            })?;
            Ok(LabeledExample {
                id: r.id.clone(),
                sequence: encode_text(vocab, &r.text),
                labels,
            })
        })
        .collect()
}

/// Renders ROC points as `threshold,fpr,tpr` CSV.
pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
    }
    out
}

/// One encodings line: `{"id": ..., "vector": [...]}`.
pub fn encoding_line(id: &str, vector: &[f64]) -> String {
    serde_json::json!({ "id": id, "vector": vector }).to_string()
}

pub const LM_KIND: &str = "language_model";
pub const CLF_KIND: &str = "classifier";

/// Packs a language model into a container.
pub fn lm_container(
    model: &LanguageModel,
    vocab_hash: String,
    metadata: BTreeMap<String, String>,
) -> Result<ModelContainer> {
    let config = serde_json::to_value(&model.config)
        .map_err(|e| CliError::Internal(format!("language model config: {e}")))?;
    Ok(ModelContainer::build(
        LM_KIND,
        config,
        Some(vocab_hash),
        metadata,
        &model.named_parameters(),
    ))
}

/// Restores a language model from a container previously built by
/// [`lm_container`] (or from the encoder tensors of a classifier container).
pub fn lm_from_container(container: &ModelContainer, config: &LmConfig) -> Result<LanguageModel> {
    let model = LanguageModel::new(config, 0)?;
    container.load_into(&model.named_parameters())?;
    Ok(model)
}

/// Reads the embedded language-model config of a container.
pub fn lm_config_of(container: &ModelContainer, key: Option<&str>) -> Result<LmConfig> {
    let value = match key {
        Some(k) => container.manifest.config.get(k).cloned().ok_or_else(|| {
            CliError::Validation(format!("container config has no '{k}' section"))
        })?,
        None => container.manifest.config.clone(),
    };
    serde_json::from_value(value)
        .map_err(|e| CliError::Validation(format!("container config does not parse: {e}")))
}

/// Requires a specific container kind before interpreting its tensors.
pub fn expect_kind(container: &ModelContainer, kind: &str, path: &Path) -> Result<()> {
    if container.manifest.kind != kind {
        return Err(CliError::Validation(format!(
            "{} holds a '{}' model, expected '{kind}'",
            path.display(),
            container.manifest.kind
        )));
    }
    Ok(())
}
