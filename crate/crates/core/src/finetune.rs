//! Classifier heads over the language-model encoder with a
//! freeze-then-unfreeze schedule.
//!
//! During the frozen phase the encoder receives no updates at all — document
//! encodings are computed once and cached, so encoder parameters stay
//! bit-identical. After unfreezing, gradients flow back through the encoder
//! at a reduced learning rate. The checkpoint kept is the epoch with the best
//! validation micro-AUC.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{TaskKind, TaskSchema};
use crate::langmodel::LanguageModel;
use crate::metrics::micro_auroc;
use crate::tensor::{binary_cross_entropy, Optimizer, Tensor};

#[derive(Debug, Error)]
pub enum FinetuneError {
    #[error("{0}")]
    Invalid(String),
    #[error("labeled data is empty")]
    EmptyData,
    #[error("classifier head has not been trained")]
    Untrained,
    #[error("threshold must be in [0, 1], got {0}")]
    BadThreshold(f64),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Lm(#[from] crate::langmodel::LmError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

pub type Result<T> = std::result::Result<T, FinetuneError>;

/// One labeled report: encoded token sequence plus the schema-ordered label
/// row.
#[derive(Debug, Clone)]
pub struct LabeledExample {
    pub id: String,
    pub sequence: Vec<usize>,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinetuneSchedule {
    pub total_epochs: usize,
    /// Epochs during which the encoder is completely frozen.
    pub freeze_epochs: usize,
    pub learning_rate: f64,
    /// Multiplier on the encoder's learning rate after unfreezing.
    pub encoder_lr_scale: f64,
    pub l2_penalty: f64,
    /// Minibatch size; each epoch still visits every example once.
    pub batch_size: usize,
}

impl Default for FinetuneSchedule {
    fn default() -> Self {
        FinetuneSchedule {
            total_epochs: 150,
            freeze_epochs: 50,
            learning_rate: 1e-2,
            encoder_lr_scale: 0.3,
            l2_penalty: 0.0,
            batch_size: 32,
        }
    }
}

impl FinetuneSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.freeze_epochs > self.total_epochs {
            return Err(FinetuneError::Invalid(format!(
                "freeze_epochs {} exceeds total_epochs {}",
                self.freeze_epochs, self.total_epochs
            )));
        }
        if self.learning_rate <= 0.0 || self.encoder_lr_scale <= 0.0 {
            return Err(FinetuneError::Invalid(
                "learning_rate and encoder_lr_scale must be positive".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(FinetuneError::Invalid("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Feedforward head over document encodings: ReLU hidden layers (default a
/// single 128-unit layer) and a per-class sigmoid output.
pub struct ClassifierHead {
    pub schema: TaskSchema,
    pub input_dim: usize,
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
    pub trained: bool,
}

impl ClassifierHead {
    pub fn new(input_dim: usize, schema: &TaskSchema, hidden: &[usize], seed: u64) -> ClassifierHead {
        let output_dim = match schema.kind {
            TaskKind::Binary => 1,
            TaskKind::Multilabel => schema.classes.len(),
        };
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(output_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for win in sizes.windows(2) {
            let scale = (6.0 / (win[0] + win[1]) as f64).sqrt();
            weights.push(Tensor::rand_uniform(&[win[0], win[1]], scale, &mut rng).requires_grad());
            biases.push(Tensor::zeros(&[1, win[1]]).requires_grad());
        }
        ClassifierHead {
            schema: schema.clone(),
            input_dim,
            layer_sizes: sizes,
            weights,
            biases,
            trained: false,
        }
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Encodings (n x input_dim) to per-class probabilities (n x classes).
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = h.matmul(w)?.add_rowvec(b)?;
            if i < last {
                h = h.relu();
            }
        }
        Ok(h.sigmoid())
    }

    pub fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            out.push((format!("head.w{i}"), w.clone()));
            out.push((format!("head.b{i}"), b.clone()));
        }
        out
    }
}

/// One row of the fine-tuning metrics log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinetuneEpochRecord {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    /// Undefined (single-class pooled labels) reported as absent, never 0.
    pub micro_auc: Option<f64>,
    pub elapsed_seconds: f64,
}

pub struct FinetuneResult {
    pub head: ClassifierHead,
    pub metrics: Vec<FinetuneEpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_auc: Option<f64>,
}

fn validate_examples(examples: &[LabeledExample], schema: &TaskSchema, width: usize) -> Result<()> {
    for ex in examples {
        if ex.labels.len() != width {
            return Err(FinetuneError::Invalid(format!(
                "label row for '{}' has {} entries; schema '{}' expects {width}",
                ex.id,
                ex.labels.len(),
                schema.name
            )));
        }
        if ex.sequence.is_empty() {
            return Err(FinetuneError::Invalid(format!(
                "report '{}' has an empty token sequence",
                ex.id
            )));
        }
    }
    Ok(())
}

fn targets_tensor(examples: &[LabeledExample], width: usize) -> Result<Tensor> {
    let data: Vec<f64> = examples
        .iter()
        .flat_map(|e| e.labels.iter().map(|&v| f64::from(v)))
        .collect();
    Ok(Tensor::from_vec(data, &[examples.len(), width])?)
}

fn label_rows(examples: &[LabeledExample]) -> Vec<Vec<u8>> {
    examples.iter().map(|e| e.labels.clone()).collect()
}

fn probs_rows(probs: &Tensor, width: usize) -> Vec<Vec<f64>> {
    let data = probs.to_vec();
    data.chunks(width).map(<[f64]>::to_vec).collect()
}

fn snapshot(params: &[(String, Tensor)]) -> Vec<Vec<f64>> {
    params.iter().map(|(_, t)| t.to_vec()).collect()
}

fn restore(params: &[(String, Tensor)], snap: &[Vec<f64>]) {
    for ((_, t), data) in params.iter().zip(snap) {
        t.set_data(data);
    }
}

/// Trains a classifier head over the encoder. Epochs `[0, freeze_epochs)`
/// leave every encoder parameter bit-identical (encodings are cached);
/// epochs `[freeze_epochs, total_epochs)` backpropagate into the encoder at
/// `learning_rate * encoder_lr_scale`. The returned parameters are the
/// best-validation-micro-AUC checkpoint (falling back to the final epoch when
/// validation AUC is never defined). The encoder is updated in place.
pub fn train_classifier(
    encoder: &LanguageModel,
    train: &[LabeledExample],
    valid: &[LabeledExample],
    schema: &TaskSchema,
    schedule: &FinetuneSchedule,
    hidden: &[usize],
    seed: u64,
) -> Result<FinetuneResult> {
    schedule.validate()?;
    if train.is_empty() {
        return Err(FinetuneError::EmptyData);
    }
    let width = match schema.kind {
        TaskKind::Binary => 1,
        TaskKind::Multilabel => schema.classes.len(),
    };
    validate_examples(train, schema, width)?;
    validate_examples(valid, schema, width)?;

    let head = ClassifierHead::new(encoder.config.encoding_dim(), schema, hidden, seed);
    let head_params = head.named_parameters();
    let encoder_params = encoder.named_parameters();
    let train_labels = label_rows(train);
    let valid_labels = label_rows(valid);
    let dim = encoder.config.encoding_dim();

    let start = std::time::Instant::now();
    let mut metrics = Vec::new();
    let mut best: Option<(usize, f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> = None;

    // cached encodings serve the whole frozen phase and validation scoring
    let encode_matrix = |examples: &[LabeledExample]| -> Result<Tensor> {
        let mut data = Vec::with_capacity(examples.len() * dim);
        for ex in examples {
            data.extend(encoder.encode_document(&ex.sequence)?);
        }
        Ok(Tensor::from_vec(data, &[examples.len(), dim])?)
    };
    let mut cached_train = encode_matrix(train)?;

    // minibatch targets for one shuffled index chunk
    let chunk_targets = |chunk: &[usize]| -> Result<Tensor> {
        let mut data = Vec::with_capacity(chunk.len() * width);
        for &i in chunk {
            data.extend(train[i].labels.iter().map(|&v| f64::from(v)));
        }
        Ok(Tensor::from_vec(data, &[chunk.len(), width])?)
    };

    let mut frozen_opt = Optimizer::adam(schedule.learning_rate, schedule.l2_penalty);
    frozen_opt.register_all(&head_params);
    let mut unfrozen_opt = Optimizer::adam(schedule.learning_rate, schedule.l2_penalty);
    unfrozen_opt.register_all(&head_params);
    for (name, t) in &encoder_params {
        // the word-prediction projections sit after the encoding layer and
        // receive no gradient from the classifier loss
        if !name.contains(".proj.") {
            unfrozen_opt.register_scaled(name, t, schedule.encoder_lr_scale);
        }
    }

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00ba_7c4e);
    for epoch in 0..schedule.total_epochs {
        let frozen = epoch < schedule.freeze_epochs;
        {
            use rand::seq::SliceRandom;
            order.shuffle(&mut shuffle_rng);
        }
        let mut loss_sum = 0.0;
        let mut seen = 0.0;
        for chunk in order.chunks(schedule.batch_size) {
            let targets = chunk_targets(chunk)?;
            let encodings = if frozen {
                // gather the cached rows for this minibatch
                let cached = cached_train.to_vec();
                let mut data = Vec::with_capacity(chunk.len() * dim);
                for &i in chunk {
                    data.extend_from_slice(&cached[i * dim..(i + 1) * dim]);
                }
                Tensor::from_vec(data, &[chunk.len(), dim])?
            } else {
                let mut rows = Vec::with_capacity(chunk.len());
                for &i in chunk {
                    rows.push(encoder.encode_document_graph(&train[i].sequence)?);
                }
                Tensor::concat_rows(&rows)?
            };
            let probs = head.forward(&encodings)?;
            let loss = binary_cross_entropy(&probs, &targets)?;
            loss.backward()?;
            if frozen {
                frozen_opt.step()?;
            } else {
                unfrozen_opt.step()?;
            }
            loss_sum += loss.item() * chunk.len() as f64;
            seen += chunk.len() as f64;
        }
        let loss_value = loss_sum / seen;

        let train_probs = if frozen {
            head.forward(&cached_train)?
        } else {
            cached_train = encode_matrix(train)?;
            head.forward(&cached_train)?
        };
        let train_auc = micro_auroc(&probs_rows(&train_probs, width), &train_labels).ok();
        metrics.push(FinetuneEpochRecord {
            epoch,
            split: "train".into(),
            loss: loss_value,
            micro_auc: train_auc,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });

        if !valid.is_empty() {
            let valid_enc = encode_matrix(valid)?;
            let probs = head.forward(&valid_enc)?;
            let valid_targets = targets_tensor(valid, width)?;
            let val_loss = binary_cross_entropy(&probs.detach(), &valid_targets)?.item();
            let val_auc = micro_auroc(&probs_rows(&probs, width), &valid_labels).ok();
            metrics.push(FinetuneEpochRecord {
                epoch,
                split: "valid".into(),
                loss: val_loss,
                micro_auc: val_auc,
                elapsed_seconds: start.elapsed().as_secs_f64(),
            });
            if let Some(auc) = val_auc {
                if best.as_ref().is_none_or(|(_, b, _, _)| auc > *b) {
                    best = Some((epoch, auc, snapshot(&head_params), snapshot(&encoder_params)));
                }
            }
        }
    }

    let (best_epoch, best_val_auc) = match best {
        Some((epoch, auc, head_snap, enc_snap)) => {
            restore(&head_params, &head_snap);
            restore(&encoder_params, &enc_snap);
            (Some(epoch), Some(auc))
        }
        None => (None, None),
    };

    let mut head = head;
    head.trained = true;
    Ok(FinetuneResult {
        head,
        metrics,
        best_epoch,
        best_val_auc,
    })
}

/// Encode-then-classify: per-class probabilities for each report sequence.
pub fn predict(
    head: &ClassifierHead,
    encoder: &LanguageModel,
    sequences: &[Vec<usize>],
) -> Result<Vec<Vec<f64>>> {
    if !head.trained {
        return Err(FinetuneError::Untrained);
    }
    let width = head.output_dim();
    let mut out = Vec::with_capacity(sequences.len());
    for seq in sequences {
        let enc = encoder.encode_document_graph(seq)?;
        let probs = head.forward(&enc)?;
        let row = probs.to_vec();
        debug_assert_eq!(row.len(), width);
        out.push(row);
    }
    Ok(out)
}

/// Discretizes probabilities: label 1 iff p >= threshold.
pub fn threshold_labels(probabilities: &[Vec<f64>], threshold: f64) -> Result<Vec<Vec<u8>>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(FinetuneError::BadThreshold(threshold));
    }
    for row in probabilities {
        for &p in row {
            if !(0.0..=1.0).contains(&p) {
                return Err(FinetuneError::Invalid(format!(
                    "probability {p} outside [0, 1]"
                )));
            }
        }
    }
    Ok(probabilities
        .iter()
        .map(|row| row.iter().map(|&p| u8::from(p >= threshold)).collect())
        .collect())
}

/// JSON-lines prediction export: `{"id", "scores": class->p, "labels": class->0/1}`.
pub fn export_predictions(
    ids: &[String],
    class_names: &[String],
    scores: &[Vec<f64>],
    threshold: f64,
) -> Result<String> {
    use std::collections::BTreeMap;
    if ids.len() != scores.len() {
        return Err(FinetuneError::Invalid(format!(
            "{} ids vs {} score rows",
            ids.len(),
            scores.len()
        )));
    }
    let labels = threshold_labels(scores, threshold)?;
    #[derive(Serialize)]
    struct Line<'a> {
        id: &'a str,
        scores: BTreeMap<&'a str, f64>,
        labels: BTreeMap<&'a str, u8>,
    }
    let mut out = String::new();
    for ((id, row), lab) in ids.iter().zip(scores).zip(&labels) {
        if row.len() != class_names.len() {
            return Err(FinetuneError::Invalid(format!(
                "score row for '{id}' has {} entries for {} classes",
                row.len(),
                class_names.len()
            )));
        }
        let line = Line {
            id,
            scores: class_names
                .iter()
                .map(String::as_str)
                .zip(row.iter().copied())
                .collect(),
            labels: class_names
                .iter()
                .map(String::as_str)
                .zip(lab.iter().copied())
                .collect(),
        };
        out.push_str(&serde_json::to_string(&line).expect("prediction line serializes"));
        out.push('\n');
    }
    Ok(out)
}
