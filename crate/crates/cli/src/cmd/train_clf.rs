//! `relm train-clf`: classifier-head fine-tuning on a pretrained encoder,
//! with frozen-then-unfrozen encoder schedule and held-out evaluation.

use std::collections::BTreeMap;
use std::path::Path;

use relm_core::container::ModelContainer;
use relm_core::finetune::{
    export_predictions, predict, threshold_labels, train_classifier, FinetuneEpochRecord,
};
use relm_core::metrics::evaluate;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::io::{
    ensure_dir, expect_kind, labeled_examples, lm_config_of, lm_from_container, load_corpus,
    load_vocabulary, roc_csv, write_file, CLF_KIND, LM_KIND,
};

pub fn run(
    cfg: &PipelineConfig,
    encoder_path: &Path,
    vocab_path: &Path,
    train_path: &Path,
    valid_path: Option<&Path>,
    test_path: Option<&Path>,
) -> Result<()> {
    let seed = cfg.seed()?;
    let out_dir = cfg.output_dir()?.to_path_buf();

    let container = ModelContainer::load(encoder_path)?;
    expect_kind(&container, LM_KIND, encoder_path)?;
    let vocab = load_vocabulary(vocab_path)?;
    container.verify_vocabulary_hash(&vocab.hash())?;
    let lm_config = lm_config_of(&container, None)?;
    let encoder = lm_from_container(&container, &lm_config)?;

    let schema = cfg.task.schema()?;
    let train = labeled_examples(&load_corpus(train_path)?, &vocab, &schema)?;
    let valid = match valid_path {
        Some(p) => labeled_examples(&load_corpus(p)?, &vocab, &schema)?,
        None => Vec::new(),
    };

    let schedule = cfg.finetune.schedule();
    println!(
        "fine-tuning '{}' on {} train / {} valid examples ({} frozen of {} epochs)",
        schema.name,
        train.len(),
        valid.len(),
        schedule.freeze_epochs,
        schedule.total_epochs
    );
    let result = train_classifier(
        &encoder,
        &train,
        &valid,
        &schema,
        &schedule,
        &cfg.finetune.head_hidden,
        seed,
    )?;
    if let (Some(epoch), Some(auc)) = (result.best_epoch, result.best_val_auc) {
        println!("best validation micro-AUC {auc:.4} at epoch {epoch}");
    }

    ensure_dir(&out_dir)?;
    write_file(&out_dir.join("clf_metrics.csv"), &metrics_csv(&result.metrics))?;

    // Both head and (possibly updated) encoder tensors go into one container,
    // so the classifier artifact is self-contained.
    let mut tensors = result.head.named_parameters();
    tensors.extend(encoder.named_parameters());
    let config = serde_json::json!({
        "lm": lm_config,
        "head": {
            "schema": schema,
            "hidden": cfg.finetune.head_hidden,
            "input_dim": lm_config.encoding_dim(),
        },
    });
    let mut metadata = BTreeMap::new();
    metadata.insert("seed".to_string(), seed.to_string());
    metadata.insert("total_epochs".to_string(), schedule.total_epochs.to_string());
    metadata.insert("freeze_epochs".to_string(), schedule.freeze_epochs.to_string());
    let clf_container =
        ModelContainer::build(CLF_KIND, config, Some(vocab.hash()), metadata, &tensors);
    clf_container.save(&out_dir.join("classifier.relm"))?;

    if let Some(test_path) = test_path {
        let test_reports = load_corpus(test_path)?;
        let test = labeled_examples(&test_reports, &vocab, &schema)?;
        let sequences: Vec<Vec<usize>> = test.iter().map(|e| e.sequence.clone()).collect();
        let scores = predict(&result.head, &encoder, &sequences)?;
        let actual: Vec<Vec<u8>> = test.iter().map(|e| e.labels.clone()).collect();
        let class_names = head_class_names(&schema);

        let report = evaluate(&class_names, &scores, &actual, cfg.finetune.threshold)?;
        let rendered = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Internal(format!("eval report serialization: {e}")))?;
        write_file(&out_dir.join("eval_report.json"), &rendered)?;
        write_file(&out_dir.join("test_roc.csv"), &roc_csv(&report.micro_roc))?;

        let ids: Vec<String> = test.iter().map(|e| e.id.clone()).collect();
        let predictions =
            export_predictions(&ids, &class_names, &scores, cfg.finetune.threshold)?;
        write_file(&out_dir.join("predictions.jsonl"), &predictions)?;

        let (f1, _) = relm_core::metrics::f1_micro(
            &threshold_labels(&scores, cfg.finetune.threshold)?,
            &actual,
        )?;
        match report.micro_auc {
            Some(auc) => println!("test micro-AUC {auc:.4}, micro-F1 {f1:.4}"),
            None => println!("test micro-AUC undefined (single-class slice), micro-F1 {f1:.4}"),
        }
    }

    cfg.write_effective(&out_dir, "train_clf")?;
    println!("saved classifier to {}", out_dir.join("classifier.relm").display());
    Ok(())
}

/// Output column names: the class list, except binary tasks which have a
/// single sigmoid named after the task's lone class.
fn head_class_names(schema: &relm_core::corpus::TaskSchema) -> Vec<String> {
    schema.classes.clone()
}

fn metrics_csv(records: &[FinetuneEpochRecord]) -> String {
    let mut out = String::from("epoch,split,loss,micro_auc,elapsed_seconds\n");
    for r in records {
        let auc = r
            .micro_auc
            .map(|a| format!("{a:.6}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{:.6},{},{:.3}\n",
            r.epoch, r.split, r.loss, auc, r.elapsed_seconds
        ));
    }
    out
}
