//! `relm project`: truncated-SVD projection of encodings or tfidf features
//! to 2 or 3 coordinates, with labels joined when available.

use std::collections::BTreeMap;
use std::path::Path;

use relm_core::baselines::{parse_embeddings_jsonl, FeatureMatrix};
use relm_core::corpus::{tokenize, Vocabulary};
use relm_core::vectorize::{fit_truncated_svd, project, TfidfModel};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::io::{encode_text, load_corpus, read_file, write_file};

pub fn run(
    cfg: &PipelineConfig,
    source: &Path,
    tfidf: bool,
    labels_path: Option<&Path>,
    out: &Path,
    k_flag: Option<usize>,
) -> Result<()> {
    let seed = cfg.seed()?;
    let k = k_flag.unwrap_or(cfg.project.k);
    if !(2..=3).contains(&k) {
        return Err(CliError::Validation(format!("k must be 2 or 3, got {k}")));
    }

    let matrix = if tfidf {
        tfidf_matrix(cfg, source)?
    } else {
        parse_embeddings_jsonl(&read_file(source)?)?
    };
    if k > matrix.n_cols {
        return Err(CliError::Validation(format!(
            "k={k} exceeds the feature dimension {}",
            matrix.n_cols
        )));
    }

    let labels: Option<BTreeMap<String, String>> = match labels_path {
        Some(p) => {
            let reports = load_corpus(p)?;
            Some(
                reports
                    .into_iter()
                    .map(|r| {
                        let positive: Vec<&str> = r
                            .labels
                            .iter()
                            .filter(|(_, &v)| v == 1)
                            .map(|(k, _)| k.as_str())
                            .collect();
                        let tag = if positive.is_empty() {
                            "none".to_string()
                        } else {
                            positive.join("|")
                        };
                        (r.id, tag)
                    })
                    .collect(),
            )
        }
        None => None,
    };

    let model = fit_truncated_svd(
        &matrix.values,
        matrix.n_rows,
        matrix.n_cols,
        k,
        cfg.project.centered,
        seed,
    )?;
    let coords = project(&model, &matrix.values, matrix.n_rows)?;

    let mut csv = String::from(match (k, labels.is_some()) {
        (2, false) => "id,x,y\n",
        (2, true) => "id,x,y,label\n",
        (3, false) => "id,x,y,z\n",
        (3, true) => "id,x,y,z,label\n",
        _ => unreachable!(),
    });
    for (i, id) in matrix.row_ids.iter().enumerate() {
        csv.push_str(id);
        for j in 0..k {
            csv.push_str(&format!(",{:.6}", coords[i * k + j]));
        }
        if let Some(labels) = &labels {
            csv.push(',');
            csv.push_str(labels.get(id).map(String::as_str).unwrap_or(""));
        }
        csv.push('\n');
    }
    write_file(out, &csv)?;
    if let Some(dir) = out.parent() {
        cfg.write_effective(dir, "project")?;
    }
    println!(
        "projected {} vectors to {k} coordinates: {}",
        matrix.n_rows,
        out.display()
    );
    Ok(())
}

/// Builds tfidf features straight from a report corpus.
fn tfidf_matrix(cfg: &PipelineConfig, corpus_path: &Path) -> Result<FeatureMatrix> {
    let reports = load_corpus(corpus_path)?;
    let tokens: Vec<Vec<String>> = reports.iter().map(|r| tokenize(&r.text)).collect();
    let vocab = Vocabulary::build(&tokens, cfg.vocab.min_count)?;
    let docs: Vec<Vec<usize>> = reports.iter().map(|r| encode_text(&vocab, &r.text)).collect();
    let model = TfidfModel::fit(&docs, vocab.len())?;
    let mut values = Vec::with_capacity(reports.len() * vocab.len());
    let mut ids = Vec::with_capacity(reports.len());
    for (r, doc) in reports.iter().zip(&docs) {
        values.extend(model.transform_dense(doc));
        ids.push(r.id.clone());
    }
    Ok(FeatureMatrix::new(values, reports.len(), vocab.len(), ids)?)
}
