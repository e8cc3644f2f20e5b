//! `relm encode`: fixed-dimension document encodings from a trained model.

use std::path::Path;

use relm_core::container::ModelContainer;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::io::{
    encode_text, encoding_line, expect_kind, lm_config_of, lm_from_container, load_corpus,
    load_vocabulary, write_file, LM_KIND,
};

pub fn run(
    cfg: &PipelineConfig,
    model_path: &Path,
    vocab_path: &Path,
    corpus_path: &Path,
    out_path: &Path,
) -> Result<()> {
    let container = ModelContainer::load(model_path)?;
    expect_kind(&container, LM_KIND, model_path)?;
    let vocab = load_vocabulary(vocab_path)?;
    container.verify_vocabulary_hash(&vocab.hash())?;

    let lm_config = lm_config_of(&container, None)?;
    let model = lm_from_container(&container, &lm_config)?;
    let reports = load_corpus(corpus_path)?;

    let mut out = String::new();
    for report in &reports {
        if report.text.trim().is_empty() {
            return Err(CliError::Validation(format!(
                "report '{}' has empty text",
                report.id
            )));
        }
        let vector = model.encode_document(&encode_text(&vocab, &report.text))?;
        out.push_str(&encoding_line(&report.id, &vector));
        out.push('\n');
    }
    write_file(out_path, &out)?;
    if let Some(dir) = out_path.parent() {
        cfg.write_effective(dir, "encode")?;
    }
    println!(
        "encoded {} reports ({}-dim) to {}",
        reports.len(),
        lm_config.encoding_dim(),
        out_path.display()
    );
    Ok(())
}
