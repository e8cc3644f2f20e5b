//! `relm baseline`: feature-based model sweep over Naive Bayes, logistic
//! regression, linear SVM and an MLP, producing one CSV row per model.
//!
//! A model that rejects the feature source (for example Naive Bayes on
//! signed tfidf weights) contributes an error row; the sweep continues.

use std::path::Path;

use relm_core::baselines::{
    parse_embeddings_jsonl, train_logistic, train_mlp, train_naive_bayes, train_svm,
    FeatureMatrix, GdConfig, MlpConfig,
};
use relm_core::corpus::{tokenize, LabeledReport, TaskSchema, Vocabulary};
use relm_core::metrics::{f1_micro, micro_auroc};
use relm_core::vectorize::TfidfModel;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::io::{encode_text, ensure_dir, load_corpus, read_file, write_file};

pub fn run(
    cfg: &PipelineConfig,
    train_path: &Path,
    test_path: &Path,
    train_embeddings: Option<&Path>,
    test_embeddings: Option<&Path>,
) -> Result<()> {
    let seed = cfg.seed()?;
    let out_dir = cfg.output_dir()?.to_path_buf();
    if cfg.baseline.models.is_empty() {
        return Err(CliError::Validation(
            "baseline.models is empty: request at least one of nb, logistic, svm, mlp".into(),
        ));
    }

    let schema = cfg.task.schema()?;
    let train_reports = load_corpus(train_path)?;
    let test_reports = load_corpus(test_path)?;
    let y_train = label_rows(&train_reports, &schema)?;
    let y_test = label_rows(&test_reports, &schema)?;

    let feature = cfg.baseline.feature.as_str();
    let (x_train, x_test) = match feature {
        "tfidf" => tfidf_features(cfg, &train_reports, &test_reports)?,
        "embeddings" => {
            let (train_p, test_p) = match (train_embeddings, test_embeddings) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(CliError::Validation(
                        "baseline.feature = \"embeddings\" needs --train-embeddings and --test-embeddings".into(),
                    ))
                }
            };
            let x_train = parse_embeddings_jsonl(&read_file(train_p)?)?;
            let x_test = parse_embeddings_jsonl(&read_file(test_p)?)?;
            (x_train, x_test)
        }
        other => {
            return Err(CliError::Validation(format!(
                "baseline.feature must be 'tfidf' or 'embeddings', got '{other}'"
            )))
        }
    };
    if x_train.n_cols != x_test.n_cols {
        return Err(CliError::Validation(format!(
            "train features have {} columns, test features {}",
            x_train.n_cols, x_test.n_cols
        )));
    }

    let mut csv = String::from("model,feature,micro_auc,micro_f1,error\n");
    let mut best: Option<(String, f64)> = None;
    for model_name in &cfg.baseline.models {
        let row = sweep_row(cfg, model_name, feature, &x_train, &y_train, &x_test, &y_test, &schema, seed);
        match row {
            Ok((auc, f1)) => {
                csv.push_str(&format!("{model_name},{feature},{auc:.6},{f1:.6},\n"));
                if best.as_ref().map_or(true, |(_, b)| auc > *b) {
                    best = Some((model_name.clone(), auc));
                }
                println!("{model_name}: micro-AUC {auc:.4}, micro-F1 {f1:.4}");
            }
            Err(SweepError::Row(msg)) => {
                csv.push_str(&format!("{model_name},{feature},,,\"{}\"\n", msg.replace('"', "'")));
                println!("{model_name}: skipped ({msg})");
            }
            Err(SweepError::Fatal(e)) => return Err(e),
        }
    }
    ensure_dir(&out_dir)?;
    write_file(&out_dir.join("baselines.csv"), &csv)?;
    cfg.write_effective(&out_dir, "baseline")?;
    if let Some((name, auc)) = best {
        println!("best baseline: {name} at micro-AUC {auc:.4}");
    }
    println!("wrote {}", out_dir.join("baselines.csv").display());
    Ok(())
}

/// Per-row failures keep the sweep going; fatal errors abort it.
enum SweepError {
    Row(String),
    Fatal(CliError),
}

#[allow(clippy::too_many_arguments)]
fn sweep_row(
    cfg: &PipelineConfig,
    model_name: &str,
    feature: &str,
    x_train: &FeatureMatrix,
    y_train: &[Vec<u8>],
    x_test: &FeatureMatrix,
    y_test: &[Vec<u8>],
    schema: &TaskSchema,
    seed: u64,
) -> std::result::Result<(f64, f64), SweepError> {
    let classes = schema.classes.clone();
    let gd = GdConfig {
        learning_rate: cfg.baseline.gd_learning_rate,
        epochs: cfg.baseline.gd_epochs,
        regularization: cfg.baseline.gd_regularization,
        seed,
    };
    // SVM margins are thresholded at 0, probabilities at the configured value.
    let (scores, threshold) = match model_name {
        "nb" => {
            let model = train_naive_bayes(x_train, y_train, &classes, cfg.baseline.alpha)
                .map_err(|e| SweepError::Row(e.to_string()))?;
            let s = model.predict_scores(x_test).map_err(|e| SweepError::Fatal(e.into()))?;
            (s, 0.5)
        }
        "logistic" => {
            let model = train_logistic(x_train, y_train, &classes, &gd)
                .map_err(|e| SweepError::Fatal(e.into()))?;
            let s = model.predict_scores(x_test).map_err(|e| SweepError::Fatal(e.into()))?;
            (s, 0.5)
        }
        "svm" => {
            let model = train_svm(x_train, y_train, &classes, &gd)
                .map_err(|e| SweepError::Fatal(e.into()))?;
            let s = model.predict_scores(x_test).map_err(|e| SweepError::Fatal(e.into()))?;
            (s, 0.0)
        }
        "mlp" => {
            let mlp_cfg = MlpConfig {
                hidden: cfg.baseline.mlp_hidden.clone(),
                learning_rate: cfg.baseline.mlp_learning_rate,
                epochs: cfg.baseline.mlp_epochs,
                dropout: cfg.baseline.mlp_dropout,
                l2: cfg.baseline.mlp_l2,
                seed,
            };
            let (model, _losses) = train_mlp(x_train, y_train, schema, &mlp_cfg)
                .map_err(|e| SweepError::Fatal(e.into()))?;
            let s = model.predict_scores(x_test).map_err(|e| SweepError::Fatal(e.into()))?;
            (s, 0.5)
        }
        other => {
            return Err(SweepError::Fatal(CliError::Validation(format!(
                "unknown baseline model '{other}' (expected nb, logistic, svm or mlp); feature source '{feature}'"
            ))))
        }
    };
    let auc = micro_auroc(&scores, y_test).map_err(|e| SweepError::Row(e.to_string()))?;
    let predicted: Vec<Vec<u8>> = scores
        .iter()
        .map(|row| row.iter().map(|&s| u8::from(s >= threshold)).collect())
        .collect();
    let (f1, _) = f1_micro(&predicted, y_test).map_err(|e| SweepError::Fatal(e.into()))?;
    Ok((auc, f1))
}

fn label_rows(reports: &[LabeledReport], schema: &TaskSchema) -> Result<Vec<Vec<u8>>> {
    reports
        .iter()
        .map(|r| {
            schema
                .label_row(&r.labels)
                .map_err(|e| CliError::Validation(format!("report '{}': {e}", r.id)))
        })
        .collect()
}

/// Fits tfidf on the training reports and transforms both partitions.
fn tfidf_features(
    cfg: &PipelineConfig,
    train: &[LabeledReport],
    test: &[LabeledReport],
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let train_tokens: Vec<Vec<String>> = train.iter().map(|r| tokenize(&r.text)).collect();
    let vocab = Vocabulary::build(&train_tokens, cfg.vocab.min_count)?;
    let train_docs: Vec<Vec<usize>> = train.iter().map(|r| encode_text(&vocab, &r.text)).collect();
    let model = TfidfModel::fit(&train_docs, vocab.len())?;
    let to_matrix = |reports: &[LabeledReport]| -> Result<FeatureMatrix> {
        let mut values = Vec::with_capacity(reports.len() * vocab.len());
        let mut ids = Vec::with_capacity(reports.len());
        for r in reports {
            values.extend(model.transform_dense(&encode_text(&vocab, &r.text)));
            ids.push(r.id.clone());
        }
        Ok(FeatureMatrix::new(values, reports.len(), vocab.len(), ids)?)
    };
    Ok((to_matrix(train)?, to_matrix(test)?))
}
