//! The baseline ladder: multinomial Naive Bayes, logistic regression, linear
//! SVM, and a feedforward classifier, all one-vs-rest over the same
//! (features, labels) interface so a sweep is a single loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{TaskKind, TaskSchema};
use crate::tensor::{binary_cross_entropy, sigmoid_stable, Optimizer, Tensor};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("feature/label row count mismatch: {0} rows vs {1} label rows")]
    RowMismatch(usize, usize),
    #[error("negative feature value {value} at row {row}, column {col}: multinomial Naive Bayes needs non-negative features — use raw counts instead of signed tfidf weights")]
    NegativeFeature { row: usize, col: usize, value: f64 },
    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model has not been trained")]
    Untrained,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

pub type Result<T> = std::result::Result<T, BaselineError>;

/// Dense n x d feature matrix with row ids aligned to reports.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub values: Vec<f64>,
    pub row_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(values: Vec<f64>, n_rows: usize, n_cols: usize, row_ids: Vec<String>) -> Result<Self> {
        if values.len() != n_rows * n_cols || row_ids.len() != n_rows {
            return Err(BaselineError::Invalid(format!(
                "feature matrix buffer {} != {n_rows} x {n_cols} (ids {})",
                values.len(),
                row_ids.len()
            )));
        }
        Ok(FeatureMatrix {
            n_rows,
            n_cols,
            values,
            row_ids,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

/// Parses external embedding files (JSON-lines `{"id", "vector"}`) into a
/// feature matrix, validating dimension consistency.
pub fn parse_embeddings_jsonl(content: &str) -> Result<FeatureMatrix> {
    #[derive(Deserialize)]
    struct Line {
        id: String,
        vector: Vec<f64>,
    }
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Line = serde_json::from_str(line)
            .map_err(|e| BaselineError::Invalid(format!("embeddings line {}: {e}", i + 1)))?;
        match dim {
            None => dim = Some(rec.vector.len()),
            Some(d) if d != rec.vector.len() => {
                return Err(BaselineError::DimensionMismatch {
                    expected: d,
                    got: rec.vector.len(),
                })
            }
            _ => {}
        }
        ids.push(rec.id);
        values.extend(rec.vector);
    }
    let d = dim.ok_or_else(|| BaselineError::Invalid("empty embeddings file".into()))?;
    let n = ids.len();
    FeatureMatrix::new(values, n, d, ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    NaiveBayes,
    Logistic,
    Svm,
}

/// One-vs-rest linear scorer: one weight row and bias per class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub classes: Vec<String>,
    pub n_features: usize,
    /// class x feature, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Per class: Some(label) when training saw a single label value, in
    /// which case prediction is that label with certainty.
    pub constant_class: Vec<Option<u8>>,
    pub trained: bool,
}

impl LinearModel {
    fn empty(kind: LinearKind, classes: &[String], n_features: usize) -> LinearModel {
        LinearModel {
            kind,
            classes: classes.to_vec(),
            n_features,
            weights: vec![0.0; classes.len() * n_features],
            bias: vec![0.0; classes.len()],
            constant_class: vec![None; classes.len()],
            trained: false,
        }
    }

    /// Per-class scores: probabilities for NB/logistic, raw margins for SVM.
    pub fn predict_scores(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        if !self.trained {
            return Err(BaselineError::Untrained);
        }
        if x.n_cols != self.n_features {
            return Err(BaselineError::DimensionMismatch {
                expected: self.n_features,
                got: x.n_cols,
            });
        }
        let n_classes = self.classes.len();
        let mut out = Vec::with_capacity(x.n_rows);
        for i in 0..x.n_rows {
            let row = x.row(i);
            let mut scores = Vec::with_capacity(n_classes);
            for c in 0..n_classes {
                if let Some(label) = self.constant_class[c] {
                    scores.push(f64::from(label));
                    continue;
                }
                let w = &self.weights[c * self.n_features..(c + 1) * self.n_features];
                let z: f64 = w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + self.bias[c];
                scores.push(match self.kind {
                    LinearKind::Svm => z,
                    _ => sigmoid_stable(z),
                });
            }
            out.push(scores);
        }
        Ok(out)
    }
}

fn check_rows(x: &FeatureMatrix, y: &[Vec<u8>]) -> Result<()> {
    if x.n_rows != y.len() {
        return Err(BaselineError::RowMismatch(x.n_rows, y.len()));
    }
    Ok(())
}

/// Multinomial Naive Bayes with additive smoothing. The fitted posterior is
/// expressed in log-odds form (w = log theta_pos - log theta_neg), so
/// prediction is sigmoid(w.x + b) and equals the closed-form NB posterior.
pub fn train_naive_bayes(
    x: &FeatureMatrix,
    y: &[Vec<u8>],
    classes: &[String],
    alpha: f64,
) -> Result<LinearModel> {
    check_rows(x, y)?;
    if alpha <= 0.0 {
        return Err(BaselineError::Invalid("alpha must be positive".into()));
    }
    for i in 0..x.n_rows {
        for (j, &v) in x.row(i).iter().enumerate() {
            if v < 0.0 {
                return Err(BaselineError::NegativeFeature {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    let d = x.n_cols;
    let mut model = LinearModel::empty(LinearKind::NaiveBayes, classes, d);
    for (c, _) in classes.iter().enumerate() {
        let pos_rows: Vec<usize> = (0..x.n_rows).filter(|&i| y[i][c] == 1).collect();
        let n_pos = pos_rows.len();
        let n_neg = x.n_rows - n_pos;
        if n_pos == 0 || n_neg == 0 {
            model.constant_class[c] = Some(u8::from(n_neg == 0));
            continue;
        }
        let mut pos_counts = vec![alpha; d];
        let mut neg_counts = vec![alpha; d];
        for i in 0..x.n_rows {
            let target = if y[i][c] == 1 {
                &mut pos_counts
            } else {
                &mut neg_counts
            };
            for (j, &v) in x.row(i).iter().enumerate() {
                target[j] += v;
            }
        }
        let pos_total: f64 = pos_counts.iter().sum();
        let neg_total: f64 = neg_counts.iter().sum();
        for j in 0..d {
            model.weights[c * d + j] =
                (pos_counts[j] / pos_total).ln() - (neg_counts[j] / neg_total).ln();
        }
        model.bias[c] = (n_pos as f64 / x.n_rows as f64).ln() - (n_neg as f64 / x.n_rows as f64).ln();
    }
    model.trained = true;
    Ok(model)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GdConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// l2 penalty for logistic, hinge-regularization weight for SVM.
    pub regularization: f64,
    pub seed: u64,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            learning_rate: 0.1,
            epochs: 500,
            regularization: 1e-4,
            seed: 0,
        }
    }
}

/// Full-batch gradient descent on regularized log-loss, zero init.
pub fn train_logistic(
    x: &FeatureMatrix,
    y: &[Vec<u8>],
    classes: &[String],
    cfg: &GdConfig,
) -> Result<LinearModel> {
    check_rows(x, y)?;
    let d = x.n_cols;
    let n = x.n_rows as f64;
    let mut model = LinearModel::empty(LinearKind::Logistic, classes, d);
    for (c, _) in classes.iter().enumerate() {
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        for _ in 0..cfg.epochs {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for i in 0..x.n_rows {
                let row = x.row(i);
                let z: f64 = w.iter().zip(row).map(|(a, v)| a * v).sum::<f64>() + b;
                let err = sigmoid_stable(z) - f64::from(y[i][c]);
                for (g, &v) in gw.iter_mut().zip(row) {
                    *g += err * v;
                }
                gb += err;
            }
            for (wj, gj) in w.iter_mut().zip(&gw) {
                *wj -= cfg.learning_rate * (gj / n + cfg.regularization * *wj);
            }
            b -= cfg.learning_rate * gb / n;
        }
        model.weights[c * d..(c + 1) * d].copy_from_slice(&w);
        model.bias[c] = b;
    }
    model.trained = true;
    Ok(model)
}

/// Subgradient descent on mean hinge loss with l2 regularization; scores are
/// raw margins (the metrics layer is rank-based and does not mind).
pub fn train_svm(
    x: &FeatureMatrix,
    y: &[Vec<u8>],
    classes: &[String],
    cfg: &GdConfig,
) -> Result<LinearModel> {
    check_rows(x, y)?;
    let d = x.n_cols;
    let n = x.n_rows as f64;
    let mut model = LinearModel::empty(LinearKind::Svm, classes, d);
    for (c, _) in classes.iter().enumerate() {
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        for _ in 0..cfg.epochs {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for i in 0..x.n_rows {
                let row = x.row(i);
                let target = if y[i][c] == 1 { 1.0 } else { -1.0 };
                let z: f64 = w.iter().zip(row).map(|(a, v)| a * v).sum::<f64>() + b;
                if target * z < 1.0 {
                    for (g, &v) in gw.iter_mut().zip(row) {
                        *g -= target * v;
                    }
                    gb -= target;
                }
            }
            for (wj, gj) in w.iter_mut().zip(&gw) {
                *wj -= cfg.learning_rate * (gj / n + cfg.regularization * *wj);
            }
            b -= cfg.learning_rate * gb / n;
        }
        model.weights[c * d..(c + 1) * d].copy_from_slice(&w);
        model.bias[c] = b;
    }
    model.trained = true;
    Ok(model)
}

/// Hinge loss of a fitted SVM on its training data, for convergence checks.
pub fn svm_margins(model: &LinearModel, x: &FeatureMatrix, y: &[Vec<u8>], class: usize) -> Vec<f64> {
    let d = model.n_features;
    let w = &model.weights[class * d..(class + 1) * d];
    (0..x.n_rows)
        .map(|i| {
            let target = if y[i][class] == 1 { 1.0 } else { -1.0 };
            let z: f64 =
                w.iter().zip(x.row(i)).map(|(a, v)| a * v).sum::<f64>() + model.bias[class];
            target * z
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub dropout: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![512, 256, 128],
            learning_rate: 1e-3,
            epochs: 300,
            dropout: 0.1,
            l2: 1e-5,
            seed: 0,
        }
    }
}

/// Feedforward classifier over dense features: ReLU hidden layers, per-class
/// sigmoid output, binary cross-entropy loss.
pub struct MlpClassifier {
    pub classes: Vec<String>,
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
    pub dropout: f64,
    pub trained: bool,
}

impl MlpClassifier {
    pub fn new(input_dim: usize, classes: &[String], cfg: &MlpConfig) -> MlpClassifier {
        let mut sizes = vec![input_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(classes.len());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for win in sizes.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(Tensor::rand_uniform(&[fan_in, fan_out], scale, &mut rng).requires_grad());
            biases.push(Tensor::zeros(&[1, fan_out]).requires_grad());
        }
        MlpClassifier {
            classes: classes.to_vec(),
            layer_sizes: sizes,
            weights,
            biases,
            dropout: cfg.dropout,
            trained: false,
        }
    }

    /// Forward pass to per-class probabilities. Dropout applies only when
    /// `training` (and a rng is given).
    pub fn forward<R: Rng>(
        &self,
        x: &Tensor,
        training: bool,
        rng: Option<&mut R>,
    ) -> Result<Tensor> {
        let mut h = x.clone();
        let last = self.weights.len() - 1;
        let mut rng = rng;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = h.matmul(w)?.add_rowvec(b)?;
            if i < last {
                h = h.relu();
                if training && self.dropout > 0.0 {
                    if let Some(r) = rng.as_deref_mut() {
                        h = h.dropout(self.dropout, true, r)?;
                    }
                }
            }
        }
        Ok(h.sigmoid())
    }

    pub fn predict_scores(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        if !self.trained {
            return Err(BaselineError::Untrained);
        }
        if x.n_cols != self.layer_sizes[0] {
            return Err(BaselineError::DimensionMismatch {
                expected: self.layer_sizes[0],
                got: x.n_cols,
            });
        }
        let input = Tensor::from_vec(x.values.clone(), &[x.n_rows, x.n_cols])
            .map_err(BaselineError::Tensor)?;
        let probs = self.forward::<ChaCha8Rng>(&input, false, None)?;
        let n_classes = self.classes.len();
        let data = probs.to_vec();
        Ok((0..x.n_rows)
            .map(|i| data[i * n_classes..(i + 1) * n_classes].to_vec())
            .collect())
    }

    pub fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            out.push((format!("mlp.w{i}"), w.clone()));
            out.push((format!("mlp.b{i}"), b.clone()));
        }
        out
    }
}

/// Trains the feedforward classifier with full-batch Adam. Returns the model
/// and the per-epoch loss trajectory.
pub fn train_mlp(
    x: &FeatureMatrix,
    y: &[Vec<u8>],
    schema: &TaskSchema,
    cfg: &MlpConfig,
) -> Result<(MlpClassifier, Vec<f64>)> {
    check_rows(x, y)?;
    let expected_width = match schema.kind {
        TaskKind::Binary => 1,
        TaskKind::Multilabel => schema.classes.len(),
    };
    for row in y {
        if row.len() != expected_width {
            return Err(BaselineError::Invalid(format!(
                "label row width {} does not match schema '{}' ({expected_width})",
                row.len(),
                schema.name
            )));
        }
    }
    let mut model = MlpClassifier::new(x.n_cols, &schema.classes, cfg);
    let mut opt = Optimizer::adam(cfg.learning_rate, cfg.l2);
    opt.register_all(&model.named_parameters());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);

    let input = Tensor::from_vec(x.values.clone(), &[x.n_rows, x.n_cols])?;
    let targets = Tensor::from_vec(
        y.iter().flatten().map(|&v| f64::from(v)).collect(),
        &[x.n_rows, expected_width],
    )?;
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let probs = model.forward(&input, true, Some(&mut rng))?;
        let loss = binary_cross_entropy(&probs, &targets)?;
        loss.backward()?;
        opt.step()?;
        losses.push(loss.item());
    }
    model.trained = true;
    Ok((model, losses))
}
