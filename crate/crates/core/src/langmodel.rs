//! Bidirectional LSTM language model trained by next-word (and, on the
//! reversed sequence, previous-word) prediction over unlabeled reports.
//!
//! The two directions are causally separate models — the forward stack never
//! sees tokens to the right of its target and the backward stack never sees
//! tokens to the left — sharing only the embedding table. They meet at
//! encoding time: `encode_document` pools each direction's top-layer hidden
//! states over time and concatenates them into a fixed 2H vector.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PAD_IDX;
use crate::tensor::{softmax_cross_entropy_weighted, Optimizer, Tensor};

#[derive(Debug, Error)]
pub enum LmError {
    #[error("{0}")]
    Invalid(String),
    #[error("cannot encode an empty token sequence")]
    EmptySequence,
    #[error("evaluation set has no sequence with at least 2 tokens")]
    EmptyEvaluation,
    #[error("training corpus has no sequence with at least 2 tokens")]
    EmptyCorpus,
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

pub type Result<T> = std::result::Result<T, LmError>;

/// How per-direction hidden states are pooled over time into one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Mean,
    Last,
    Max,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmConfig {
    pub vocab_size: usize,
    pub embedding_dim: usize,
    /// Hidden size per direction; the document encoding is twice this.
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub dropout: f64,
    /// Truncated backpropagation window, in tokens.
    pub bptt_window: usize,
    pub batch_size: usize,
    pub pooling: Pooling,
}

impl LmConfig {
    /// Forward and backward pooled states concatenated.
    pub fn encoding_dim(&self) -> usize {
        2 * self.hidden_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(LmError::Invalid("vocab_size must be at least 2".into()));
        }
        if self.embedding_dim == 0 || self.hidden_dim == 0 || self.num_layers == 0 {
            return Err(LmError::Invalid(
                "embedding_dim, hidden_dim and num_layers must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(LmError::Invalid(format!(
                "dropout must be in [0,1), got {}",
                self.dropout
            )));
        }
        if self.bptt_window == 0 || self.batch_size == 0 {
            return Err(LmError::Invalid(
                "bptt_window and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            vocab_size: 2000,
            embedding_dim: 64,
            hidden_dim: 200,
            num_layers: 2,
            dropout: 0.1,
            bptt_window: 64,
            batch_size: 32,
            pooling: Pooling::Mean,
        }
    }
}

/// One LSTM layer for one direction. All four gates live in a single
/// (input + H) x 4H matrix, column blocks ordered input/forget/cell/output.
pub struct LstmCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LstmCell {
    pub fn new<R: rand::Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> LstmCell {
        let scale = 1.0 / ((input_dim + hidden_dim) as f64).sqrt();
        LstmCell {
            input_dim,
            hidden_dim,
            weight: Tensor::rand_uniform(&[input_dim + hidden_dim, 4 * hidden_dim], scale, rng)
                .requires_grad(),
            bias: Tensor::zeros(&[1, 4 * hidden_dim]).requires_grad(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        4 * (self.hidden_dim * (self.input_dim + self.hidden_dim) + self.hidden_dim)
    }

    /// One recurrence step over a batch: x is B x input_dim, states are B x H.
    pub fn step(
        &self,
        x: &Tensor,
        h_prev: &Tensor,
        c_prev: &Tensor,
    ) -> crate::tensor::Result<(Tensor, Tensor)> {
        let h_dim = self.hidden_dim;
        let z = Tensor::concat_cols(&[x.clone(), h_prev.clone()])?;
        let a = z.matmul(&self.weight)?.add_rowvec(&self.bias)?;
        let i = a.slice_cols(0, h_dim)?.sigmoid();
        let f = a.slice_cols(h_dim, 2 * h_dim)?.sigmoid();
        let g = a.slice_cols(2 * h_dim, 3 * h_dim)?.tanh();
        let o = a.slice_cols(3 * h_dim, 4 * h_dim)?.sigmoid();
        let c = f.mul(c_prev)?.add(&i.mul(&g)?)?;
        let h = o.mul(&c.tanh())?;
        Ok((h, c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCount {
    pub embedding: usize,
    pub recurrent: usize,
    pub projection: usize,
    pub total: usize,
}

pub struct LanguageModel {
    pub config: LmConfig,
    /// V x E table shared by both directions.
    pub embedding: Tensor,
    pub forward_stack: Vec<LstmCell>,
    pub backward_stack: Vec<LstmCell>,
    /// Per-direction output projections, H x V plus bias; rows of the output
    /// distribution correspond to vocabulary indices.
    pub forward_proj_w: Tensor,
    pub forward_proj_b: Tensor,
    pub backward_proj_w: Tensor,
    pub backward_proj_b: Tensor,
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Backward,
}

impl LanguageModel {
    /// Builds a freshly initialized model. Projection weights start near zero
    /// so the initial predictive distribution is near-uniform.
    pub fn new(config: &LmConfig, seed: u64) -> Result<LanguageModel> {
        config.validate()?;
        let (v, e, h, l) = (
            config.vocab_size,
            config.embedding_dim,
            config.hidden_dim,
            config.num_layers,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embedding = Tensor::rand_uniform(&[v, e], 0.1, &mut rng).requires_grad();
        let build_stack = |rng: &mut ChaCha8Rng| {
            (0..l)
                .map(|layer| LstmCell::new(if layer == 0 { e } else { h }, h, rng))
                .collect::<Vec<_>>()
        };
        let forward_stack = build_stack(&mut rng);
        let backward_stack = build_stack(&mut rng);
        let proj = |rng: &mut ChaCha8Rng| {
            (
                Tensor::rand_uniform(&[h, v], 0.01, rng).requires_grad(),
                Tensor::zeros(&[1, v]).requires_grad(),
            )
        };
        let (forward_proj_w, forward_proj_b) = proj(&mut rng);
        let (backward_proj_w, backward_proj_b) = proj(&mut rng);
        Ok(LanguageModel {
            config: config.clone(),
            embedding,
            forward_stack,
            backward_stack,
            forward_proj_w,
            forward_proj_b,
            backward_proj_w,
            backward_proj_b,
        })
    }

    /// Stable name -> tensor listing; these names are also the tensor keys in
    /// the on-disk container.
    pub fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![("embedding".to_string(), self.embedding.clone())];
        for (prefix, stack) in [("fwd", &self.forward_stack), ("bwd", &self.backward_stack)] {
            for (i, cell) in stack.iter().enumerate() {
                out.push((format!("{prefix}.l{i}.weight"), cell.weight.clone()));
                out.push((format!("{prefix}.l{i}.bias"), cell.bias.clone()));
            }
        }
        out.push(("fwd.proj.weight".to_string(), self.forward_proj_w.clone()));
        out.push(("fwd.proj.bias".to_string(), self.forward_proj_b.clone()));
        out.push(("bwd.proj.weight".to_string(), self.backward_proj_w.clone()));
        out.push(("bwd.proj.bias".to_string(), self.backward_proj_b.clone()));
        out
    }

    pub fn count_parameters(&self) -> ParameterCount {
        let embedding = self.embedding.len();
        let recurrent: usize = self
            .forward_stack
            .iter()
            .chain(&self.backward_stack)
            .map(LstmCell::parameter_count)
            .sum();
        let projection = self.forward_proj_w.len()
            + self.forward_proj_b.len()
            + self.backward_proj_w.len()
            + self.backward_proj_b.len();
        ParameterCount {
            embedding,
            recurrent,
            projection,
            total: embedding + recurrent + projection,
        }
    }

    fn stack(&self, dir: Direction) -> &[LstmCell] {
        match dir {
            Direction::Forward => &self.forward_stack,
            Direction::Backward => &self.backward_stack,
        }
    }

    fn projection(&self, dir: Direction) -> (&Tensor, &Tensor) {
        match dir {
            Direction::Forward => (&self.forward_proj_w, &self.forward_proj_b),
            Direction::Backward => (&self.backward_proj_w, &self.backward_proj_b),
        }
    }

    fn zero_state(&self, batch: usize) -> Vec<(Tensor, Tensor)> {
        (0..self.config.num_layers)
            .map(|_| {
                (
                    Tensor::zeros(&[batch, self.config.hidden_dim]),
                    Tensor::zeros(&[batch, self.config.hidden_dim]),
                )
            })
            .collect()
    }

    /// One time step for a whole batch: embeds `indices`, runs the stack and
    /// returns the top-layer hidden state. Dropout between stacked layers
    /// applies only in training.
    fn step_direction(
        &self,
        dir: Direction,
        indices: &[usize],
        state: &mut Vec<(Tensor, Tensor)>,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> crate::tensor::Result<Tensor> {
        let mut x = Tensor::embedding(&self.embedding, indices)?;
        let mut rng = dropout_rng;
        for (layer, cell) in self.stack(dir).iter().enumerate() {
            let (h, c) = cell.step(&x, &state[layer].0, &state[layer].1)?;
            state[layer] = (h.clone(), c);
            x = h;
            if layer + 1 < self.config.num_layers && self.config.dropout > 0.0 {
                if let Some(r) = rng.as_deref_mut() {
                    x = x.dropout(self.config.dropout, true, r)?;
                }
            }
        }
        Ok(x)
    }

    /// Differentiable encoding: top-layer hidden states of each direction
    /// pooled over time and concatenated into a 1 x 2H tensor. Gradients flow
    /// into the encoder (used by the unfrozen fine-tuning phase).
    pub fn encode_document_graph(&self, sequence: &[usize]) -> Result<Tensor> {
        if sequence.is_empty() {
            return Err(LmError::EmptySequence);
        }
        let reversed: Vec<usize> = sequence.iter().rev().copied().collect();
        let mut pooled_dirs = Vec::with_capacity(2);
        for (dir, seq) in [
            (Direction::Forward, sequence),
            (Direction::Backward, &reversed[..]),
        ] {
            let mut state = self.zero_state(1);
            let mut tops = Vec::with_capacity(seq.len());
            for &token in seq {
                tops.push(self.step_direction(dir, &[token], &mut state, None)?);
            }
            let stacked = Tensor::concat_rows(&tops)?;
            pooled_dirs.push(match self.config.pooling {
                Pooling::Mean => stacked.mean_rows()?,
                Pooling::Last => tops.last().unwrap().clone(),
                Pooling::Max => stacked.max_rows()?,
            });
        }
        Ok(Tensor::concat_cols(&pooled_dirs)?)
    }

    /// Maps a report's index sequence to its fixed-size encoding vector.
    /// Deterministic; dropout is never applied.
    pub fn encode_document(&self, sequence: &[usize]) -> Result<Vec<f64>> {
        let encoding = self.encode_document_graph(sequence)?.to_vec();
        debug_assert_eq!(encoding.len(), self.config.encoding_dim());
        Ok(encoding)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub seed: u64,
}

impl Default for LmTrainConfig {
    fn default() -> Self {
        LmTrainConfig {
            learning_rate: 1e-3,
            epochs: 30,
            l2_penalty: 0.0,
            seed: 0,
        }
    }
}

/// One row of the per-epoch metrics log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
    pub elapsed_seconds: f64,
}

pub const METRICS_CSV_HEADER: &str = "epoch,split,loss,accuracy,elapsed_seconds";

impl EpochRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch, self.split, self.loss, self.accuracy, self.elapsed_seconds
        )
    }
}

pub struct LmTrainResult {
    pub model: LanguageModel,
    pub metrics: Vec<EpochRecord>,
    /// Sequences shorter than 2 tokens, dropped from training and validation.
    pub skipped_sequences: usize,
}

/// Running loss/accuracy totals weighted by non-padding token count.
#[derive(Default)]
struct Tally {
    loss_sum: f64,
    correct: f64,
    weight: f64,
}

impl Tally {
    fn loss(&self) -> f64 {
        self.loss_sum / self.weight.max(1.0)
    }
    fn accuracy(&self) -> f64 {
        self.correct / self.weight.max(1.0)
    }
}

/// Runs both directions over one padded batch: steps through time, flushing a
/// weighted cross-entropy loss (mean of the two directions) every
/// `bptt_window` steps. With an optimizer present this is a training pass
/// (backward + step + state detach at window boundaries); without, pure
/// evaluation.
fn run_batch(
    model: &LanguageModel,
    seqs: &[&[usize]],
    optimizer: Option<&mut Optimizer>,
    dropout_rng: Option<&mut ChaCha8Rng>,
    tally: &mut Tally,
) -> Result<()> {
    const DIRS: [Direction; 2] = [Direction::Forward, Direction::Backward];
    let v = model.config.vocab_size;
    let max_len = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
    if max_len < 2 {
        return Ok(());
    }
    let mut opt = optimizer;
    let mut rng = dropout_rng;
    let mut states = [model.zero_state(seqs.len()), model.zero_state(seqs.len())];
    let mut logit_steps: [Vec<Tensor>; 2] = [Vec::new(), Vec::new()];
    let mut targets: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    // both directions predict at the same offsets, so padding weights agree
    let mut weights: Vec<f64> = Vec::new();

    for t in 0..max_len - 1 {
        for (d, dir) in DIRS.into_iter().enumerate() {
            let indices: Vec<usize> = seqs
                .iter()
                .map(|s| {
                    let token = match dir {
                        Direction::Forward => s.get(t),
                        Direction::Backward => (t < s.len()).then(|| &s[s.len() - 1 - t]),
                    };
                    token.copied().unwrap_or(PAD_IDX)
                })
                .collect();
            for s in seqs {
                let target = match dir {
                    Direction::Forward => s.get(t + 1),
                    Direction::Backward => (t + 1 < s.len()).then(|| &s[s.len() - 2 - t]),
                };
                targets[d].push(target.copied().unwrap_or(0));
                if d == 0 {
                    weights.push(if target.is_some() { 1.0 } else { 0.0 });
                }
            }
            let top = model.step_direction(dir, &indices, &mut states[d], rng.as_deref_mut())?;
            let (proj_w, proj_b) = model.projection(dir);
            logit_steps[d].push(top.matmul(proj_w)?.add_rowvec(proj_b)?);
        }

        let window_full = logit_steps[0].len() == model.config.bptt_window;
        let last_step = t == max_len - 2;
        if window_full || last_step {
            let wsum: f64 = weights.iter().sum();
            let mut dir_losses = Vec::with_capacity(2);
            for d in 0..2 {
                let logits = Tensor::concat_rows(&logit_steps[d])?;
                let loss = softmax_cross_entropy_weighted(&logits, &targets[d], &weights)?;
                tally.loss_sum += loss.item() * wsum;
                tally.weight += wsum;
                let data = logits.data();
                for (row, (&target, &w)) in targets[d].iter().zip(&weights).enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let r = &data[row * v..(row + 1) * v];
                    let argmax = r
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(b.1))
                        .map(|(j, _)| j)
                        .unwrap();
                    if argmax == target {
                        tally.correct += 1.0;
                    }
                }
                drop(data);
                dir_losses.push(loss);
            }
            if let Some(o) = opt.as_deref_mut() {
                let combined = dir_losses[0].add(&dir_losses[1])?.scale(0.5);
                combined.backward()?;
                o.step()?;
            }
            // truncate backpropagation: carry values, drop history
            for state in states.iter_mut() {
                for (h, c) in state.iter_mut() {
                    *h = h.detach();
                    *c = c.detach();
                }
            }
            logit_steps = [Vec::new(), Vec::new()];
            targets = [Vec::new(), Vec::new()];
            weights.clear();
        }
    }
    Ok(())
}

fn batched<'a>(seqs: &[&'a [usize]], batch_size: usize) -> Vec<Vec<&'a [usize]>> {
    // bucket by length so padding stays cheap
    let mut sorted: Vec<&[usize]> = seqs.to_vec();
    sorted.sort_by_key(|s| s.len());
    sorted.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// Trains forward and backward language models over the corpus, returning the
/// model, a per-epoch metrics log (one train and one valid row per epoch) and
/// the count of skipped too-short sequences.
pub fn train_lm(
    train: &[Vec<usize>],
    valid: &[Vec<usize>],
    config: &LmConfig,
    train_cfg: &LmTrainConfig,
) -> Result<LmTrainResult> {
    let model = LanguageModel::new(config, train_cfg.seed)?;
    let usable_train: Vec<&[usize]> = train
        .iter()
        .filter(|s| s.len() >= 2)
        .map(Vec::as_slice)
        .collect();
    let usable_valid: Vec<&[usize]> = valid
        .iter()
        .filter(|s| s.len() >= 2)
        .map(Vec::as_slice)
        .collect();
    let skipped_sequences = train.len() + valid.len() - usable_train.len() - usable_valid.len();
    if usable_train.is_empty() {
        return Err(LmError::EmptyCorpus);
    }

    let mut opt = Optimizer::adam(train_cfg.learning_rate, train_cfg.l2_penalty);
    opt.register_all(&model.named_parameters());
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed ^ 0x00d1_5eed);
    let mut batches = batched(&usable_train, config.batch_size);
    let mut metrics = Vec::with_capacity(train_cfg.epochs * 2);
    let start = Instant::now();

    for epoch in 0..train_cfg.epochs {
        batches.shuffle(&mut rng);
        let mut tally = Tally::default();
        for batch in &batches {
            let dropout = (config.dropout > 0.0).then_some(&mut rng);
            run_batch(&model, batch, Some(&mut opt), dropout, &mut tally)?;
        }
        metrics.push(EpochRecord {
            epoch,
            split: "train".into(),
            loss: tally.loss(),
            accuracy: tally.accuracy(),
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
        if !usable_valid.is_empty() {
            let eval = evaluate_sequences(&model, &usable_valid)?;
            metrics.push(EpochRecord {
                epoch,
                split: "valid".into(),
                loss: eval.loss,
                accuracy: eval.top1_accuracy,
                elapsed_seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(LmTrainResult {
        model,
        metrics,
        skipped_sequences,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmEval {
    pub loss: f64,
    pub top1_accuracy: f64,
}

/// Mean cross-entropy and top-1 next/previous-word accuracy over held-out
/// sequences; performs no parameter updates.
pub fn evaluate_lm(model: &LanguageModel, sequences: &[Vec<usize>]) -> Result<LmEval> {
    let usable: Vec<&[usize]> = sequences
        .iter()
        .filter(|s| s.len() >= 2)
        .map(Vec::as_slice)
        .collect();
    if usable.is_empty() {
        return Err(LmError::EmptyEvaluation);
    }
    evaluate_sequences(model, &usable)
}

fn evaluate_sequences(model: &LanguageModel, usable: &[&[usize]]) -> Result<LmEval> {
    let mut tally = Tally::default();
    for batch in batched(usable, model.config.batch_size) {
        run_batch(model, &batch, None, None, &mut tally)?;
    }
    Ok(LmEval {
        loss: tally.loss(),
        top1_accuracy: tally.accuracy(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;

    fn tiny_config(v: usize, e: usize, h: usize, l: usize) -> LmConfig {
        LmConfig {
            vocab_size: v,
            embedding_dim: e,
            hidden_dim: h,
            num_layers: l,
            dropout: 0.0,
            bptt_window: 16,
            batch_size: 4,
            pooling: Pooling::Mean,
        }
    }

    fn zero_cell(input_dim: usize, hidden_dim: usize) -> LstmCell {
        LstmCell {
            input_dim,
            hidden_dim,
            weight: Tensor::zeros(&[input_dim + hidden_dim, 4 * hidden_dim]).requires_grad(),
            bias: Tensor::zeros(&[1, 4 * hidden_dim]).requires_grad(),
        }
    }

    #[test]
    fn lstm_step_all_zeros_gives_zero_state() {
        let cell = zero_cell(3, 2);
        let x = Tensor::zeros(&[1, 3]);
        let h0 = Tensor::zeros(&[1, 2]);
        let c0 = Tensor::zeros(&[1, 2]);
        let (h, c) = cell.step(&x, &h0, &c0).unwrap();
        // i = f = o = sigmoid(0) = 0.5, g = tanh(0) = 0 => c = 0, h = 0
        assert_eq!(h.to_vec(), vec![0.0, 0.0]);
        assert_eq!(c.to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn lstm_cell_parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = LstmCell::new(3, 2, &mut rng);
        assert_eq!(cell.parameter_count(), 48); // 4 * (2*(3+2) + 2)
        assert_eq!(cell.weight.len() + cell.bias.len(), 48);
    }

    #[test]
    fn lstm_chained_steps_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cell = LstmCell::new(2, 3, &mut rng);
        let params = vec![cell.weight.clone(), cell.bias.clone()];
        let xs: Vec<Tensor> = (0..5)
            .map(|i| Tensor::rand_uniform(&[1, 2], 0.5, &mut ChaCha8Rng::seed_from_u64(i)))
            .collect();
        let reports = check_gradients(
            &params,
            |_| {
                let mut h = Tensor::zeros(&[1, 3]);
                let mut c = Tensor::zeros(&[1, 3]);
                for x in &xs {
                    let (nh, nc) = cell.step(x, &h, &c)?;
                    h = nh;
                    c = nc;
                }
                Ok(h.sum())
            },
            1e-5,
        )
        .unwrap();
        for r in reports {
            assert!(r.max_relative_error < 1e-4, "{r:?}");
        }
    }

    #[test]
    fn parameter_count_breakdown() {
        let model = LanguageModel::new(&tiny_config(10, 4, 3, 1), 0).unwrap();
        let count = model.count_parameters();
        assert_eq!(count.embedding, 40); // V*E
        assert_eq!(count.recurrent, 2 * 96); // two directions of 4*(3*(4+3)+3)
        assert_eq!(count.projection, 2 * (3 * 10 + 10)); // H*V + V per direction
        assert_eq!(count.total, 40 + 192 + 80);
        let named_total: usize = model.named_parameters().iter().map(|(_, t)| t.len()).sum();
        assert_eq!(named_total, count.total);
    }

    #[test]
    fn fresh_model_loss_is_near_ln_v() {
        let v = 12;
        let model = LanguageModel::new(&tiny_config(v, 5, 4, 1), 3).unwrap();
        let seqs: Vec<Vec<usize>> = (0..6).map(|i| vec![6 + i % 5, 7, 8, 9, 10, 11]).collect();
        let eval = evaluate_lm(&model, &seqs).unwrap();
        let ln_v = (v as f64).ln();
        assert!(
            (eval.loss - ln_v).abs() / ln_v < 0.02,
            "loss {} vs ln V {ln_v}",
            eval.loss
        );
    }

    #[test]
    fn unrolled_lm_loss_matches_finite_differences() {
        let config = tiny_config(12, 4, 4, 1);
        let model = LanguageModel::new(&config, 11).unwrap();
        let seq: Vec<usize> = vec![6, 7, 8, 9, 10, 11];
        let params: Vec<Tensor> = model
            .named_parameters()
            .into_iter()
            .map(|(_, t)| t)
            .collect();
        let reports = check_gradients(
            &params,
            |_| {
                let mut state = model.zero_state(1);
                let mut logits = Vec::new();
                let mut targets = Vec::new();
                for t in 0..seq.len() - 1 {
                    let top = model.step_direction(Direction::Forward, &[seq[t]], &mut state, None)?;
                    logits.push(
                        top.matmul(&model.forward_proj_w)?
                            .add_rowvec(&model.forward_proj_b)?,
                    );
                    targets.push(seq[t + 1]);
                }
                let all = Tensor::concat_rows(&logits)?;
                crate::tensor::softmax_cross_entropy(&all, &targets)
            },
            1e-5,
        )
        .unwrap();
        for r in reports {
            assert!(r.max_relative_error < 1e-4, "{r:?}");
        }
    }

    fn alternating_corpus(n: usize, len: usize) -> Vec<Vec<usize>> {
        (0..n)
            .map(|_| (0..len).map(|t| 6 + t % 2).collect())
            .collect()
    }

    #[test]
    fn memorizes_alternating_corpus() {
        let config = tiny_config(8, 8, 8, 1);
        let train_cfg = LmTrainConfig {
            learning_rate: 0.1,
            epochs: 50,
            l2_penalty: 0.0,
            seed: 1,
        };
        let corpus = alternating_corpus(8, 12);
        let result = train_lm(&corpus, &[], &config, &train_cfg).unwrap();
        let eval = evaluate_lm(&result.model, &corpus).unwrap();
        assert_eq!(eval.top1_accuracy, 1.0);
        assert!(eval.loss < 0.01, "loss {}", eval.loss);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let config = tiny_config(8, 4, 4, 1);
        let train_cfg = LmTrainConfig {
            learning_rate: 0.01,
            epochs: 3,
            l2_penalty: 0.0,
            seed: 5,
        };
        let corpus = alternating_corpus(5, 9);
        let a = train_lm(&corpus, &corpus[..2].to_vec(), &config, &train_cfg).unwrap();
        let b = train_lm(&corpus, &corpus[..2].to_vec(), &config, &train_cfg).unwrap();
        let bits = |m: &[EpochRecord]| {
            m.iter()
                .map(|r| (r.epoch, r.split.clone(), r.loss.to_bits(), r.accuracy.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a.metrics), bits(&b.metrics));
    }

    #[test]
    fn short_sequences_are_skipped_and_counted() {
        let config = tiny_config(8, 4, 4, 1);
        let train_cfg = LmTrainConfig {
            epochs: 1,
            ..LmTrainConfig::default()
        };
        let mut corpus = alternating_corpus(3, 6);
        corpus.push(vec![6]);
        corpus.push(vec![]);
        let result = train_lm(&corpus, &[vec![7]], &config, &train_cfg).unwrap();
        assert_eq!(result.skipped_sequences, 3);
    }

    #[test]
    fn empty_evaluation_set_is_an_error() {
        let model = LanguageModel::new(&tiny_config(8, 4, 4, 1), 0).unwrap();
        assert!(matches!(
            evaluate_lm(&model, &[vec![6]]),
            Err(LmError::EmptyEvaluation)
        ));
    }

    #[test]
    fn encoding_is_deterministic_with_correct_dimension() {
        let config = tiny_config(10, 4, 3, 2);
        let model = LanguageModel::new(&config, 2).unwrap();
        let seq = vec![6, 7, 8, 9];
        let a = model.encode_document(&seq).unwrap();
        let b = model.encode_document(&seq).unwrap();
        assert_eq!(a.len(), config.encoding_dim());
        assert!(a.iter().all(|v| v.is_finite()));
        let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn single_token_encoding_is_finite() {
        let model = LanguageModel::new(&tiny_config(10, 4, 3, 1), 2).unwrap();
        let enc = model.encode_document(&[6]).unwrap();
        assert_eq!(enc.len(), 6);
        assert!(enc.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn empty_sequence_encoding_is_an_error() {
        let model = LanguageModel::new(&tiny_config(10, 4, 3, 1), 2).unwrap();
        assert!(matches!(
            model.encode_document(&[]),
            Err(LmError::EmptySequence)
        ));
    }

    #[test]
    fn encoding_is_order_sensitive() {
        let model = LanguageModel::new(&tiny_config(10, 4, 3, 1), 4).unwrap();
        let a = model.encode_document(&[6, 7, 8, 9]).unwrap();
        let b = model.encode_document(&[8, 9, 6, 7]).unwrap();
        let dist: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(dist > 0.0, "permuted input produced identical encoding");
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = tiny_config(10, 4, 3, 1);
        cfg.dropout = 1.0;
        assert!(cfg.validate().is_err());
        cfg.dropout = 0.1;
        cfg.vocab_size = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn metrics_csv_row_shape() {
        let rec = EpochRecord {
            epoch: 2,
            split: "train".into(),
            loss: 1.5,
            accuracy: 0.25,
            elapsed_seconds: 0.5,
        };
        assert_eq!(rec.to_csv_row(), "2,train,1.5,0.25,0.5");
        assert_eq!(METRICS_CSV_HEADER.split(',').count(), 5);
    }
}
