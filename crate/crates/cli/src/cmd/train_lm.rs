//! `relm train-lm`: vocabulary construction, train/valid/test split and
//! bidirectional language-model pretraining.

use std::collections::BTreeMap;
use std::path::Path;

use relm_core::corpus::{split, tokenize, LabeledReport, Vocabulary};
use relm_core::langmodel::{train_lm, EpochRecord, METRICS_CSV_HEADER};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::io::{encode_text, ensure_dir, lm_container, load_corpus, write_file};

pub fn run(cfg: &PipelineConfig, corpus_path: &Path) -> Result<()> {
    let seed = cfg.seed()?;
    let out_dir = cfg.output_dir()?.to_path_buf();
    let reports = load_corpus(corpus_path)?;

    let spec = cfg.split.spec(seed);
    let splits = split(&reports, &spec)?;
    let part = |name: &str| -> &[LabeledReport] {
        splits
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, items)| items.as_slice())
            .unwrap_or(&[])
    };
    let train = part("train");
    let valid = part("valid");
    if train.is_empty() {
        return Err(CliError::Validation(
            "train split is empty; increase the corpus or the train fraction".into(),
        ));
    }

    let train_tokens: Vec<Vec<String>> = train.iter().map(|r| tokenize(&r.text)).collect();
    let vocab = Vocabulary::build(&train_tokens, cfg.vocab.min_count)?;
    let encode = |reports: &[LabeledReport]| -> Vec<Vec<usize>> {
        reports.iter().map(|r| encode_text(&vocab, &r.text)).collect()
    };
    let train_seqs = encode(train);
    let valid_seqs = encode(valid);

    let lm_config = cfg.lm.lm_config(vocab.len())?;
    let train_config = cfg.lm.train_config(seed);
    println!(
        "training language model: {} train / {} valid sequences, vocabulary {} tokens",
        train_seqs.len(),
        valid_seqs.len(),
        vocab.len()
    );
    let result = train_lm(&train_seqs, &valid_seqs, &lm_config, &train_config)?;
    if result.skipped_sequences > 0 {
        println!("skipped {} too-short sequences", result.skipped_sequences);
    }

    ensure_dir(&out_dir)?;
    write_file(&out_dir.join("vocabulary.json"), &vocab.to_json())?;
    write_file(&out_dir.join("lm_metrics.csv"), &metrics_csv(&result.metrics))?;

    let mut metadata = BTreeMap::new();
    metadata.insert("seed".to_string(), seed.to_string());
    metadata.insert("epochs".to_string(), train_config.epochs.to_string());
    let container = lm_container(&result.model, vocab.hash(), metadata)?;
    container.save(&out_dir.join("lm.relm"))?;
    cfg.write_effective(&out_dir, "train_lm")?;

    if let Some(last_valid) = result.metrics.iter().rev().find(|m| m.split == "valid") {
        println!(
            "final valid loss {:.4}, top-1 accuracy {:.4}",
            last_valid.loss, last_valid.accuracy
        );
    }
    println!("saved model to {}", out_dir.join("lm.relm").display());
    Ok(())
}

fn metrics_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}
