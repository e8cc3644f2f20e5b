//! Fused loss ops with hand-derived gradients.

use super::{Tensor, TensorError};

/// Mean over rows of -log softmax(logits)[target]. Stabilized by row-max
/// subtraction; gradient is (softmax - onehot) / batch.
pub fn softmax_cross_entropy(logits: &Tensor, targets: &[usize]) -> super::Result<Tensor> {
    let weights = vec![1.0; targets.len()];
    softmax_cross_entropy_weighted(logits, targets, &weights)
}

/// Weighted form: loss = sum_i w_i * ce_i / sum_i w_i. Rows with weight 0
/// contribute nothing to loss or gradient (used to mask padding).
pub fn softmax_cross_entropy_weighted(
    logits: &Tensor,
    targets: &[usize],
    weights: &[f64],
) -> super::Result<Tensor> {
    let s = logits.shape().to_vec();
    if s.len() != 2 || s[0] != targets.len() || targets.len() != weights.len() {
        return Err(TensorError::InvalidValue(format!(
            "softmax_cross_entropy: logits {:?} vs {} targets / {} weights",
            s,
            targets.len(),
            weights.len()
        )));
    }
    let (batch, classes) = (s[0], s[1]);
    for (row, &t) in targets.iter().enumerate() {
        if t >= classes {
            return Err(TensorError::IndexOutOfRange {
                row,
                index: t,
                classes,
            });
        }
    }
    let weight_sum: f64 = weights.iter().sum();
    if weight_sum <= 0.0 {
        return Err(TensorError::InvalidValue(
            "softmax_cross_entropy: weight sum must be positive".into(),
        ));
    }

    let mut probs = vec![0.0; batch * classes];
    let mut loss = 0.0;
    {
        let d = logits.data();
        for i in 0..batch {
            let row = &d[i * classes..(i + 1) * classes];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                probs[i * classes + j] = e;
                denom += e;
            }
            for j in 0..classes {
                probs[i * classes + j] /= denom;
            }
            loss -= weights[i] * probs[i * classes + targets[i]].max(f64::MIN_POSITIVE).ln();
        }
    }
    loss /= weight_sum;

    let p = logits.clone();
    let targets = targets.to_vec();
    let weights = weights.to_vec();
    Ok(p.clone().unary_result(
        vec![loss],
        vec![1],
        Some(Box::new(move |g| {
            let scale = g[0] / weight_sum;
            let mut gl = probs.clone();
            for i in 0..batch {
                gl[i * classes + targets[i]] -= 1.0;
                for j in 0..classes {
                    gl[i * classes + j] *= scale * weights[i];
                }
            }
            p.accumulate_grad(&gl);
        })),
    ))
}

/// Mean over all (row, class) cells of -[y log p + (1-y) log(1-p)] with
/// probabilities clamped to [1e-12, 1 - 1e-12].
pub fn binary_cross_entropy(probs: &Tensor, targets: &Tensor) -> super::Result<Tensor> {
    const EPS: f64 = 1e-12;
    if probs.shape() != targets.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "binary_cross_entropy",
            lhs: probs.shape().to_vec(),
            rhs: targets.shape().to_vec(),
        });
    }
    let y = targets.to_vec();
    for &v in &y {
        if v != 0.0 && v != 1.0 {
            return Err(TensorError::InvalidValue(format!(
                "binary_cross_entropy targets must be 0 or 1, got {v}"
            )));
        }
    }
    let n = probs.len() as f64;
    let clamped: Vec<f64> = probs
        .data()
        .iter()
        .map(|&p| p.clamp(EPS, 1.0 - EPS))
        .collect();
    let mut loss = 0.0;
    for (&p, &t) in clamped.iter().zip(&y) {
        loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
    }
    loss /= n;

    let parent = probs.clone();
    Ok(parent.clone().unary_result(
        vec![loss],
        vec![1],
        Some(Box::new(move |g| {
            let scale = g[0] / n;
            let gp: Vec<f64> = clamped
                .iter()
                .zip(&y)
                .map(|(&p, &t)| scale * (-t / p + (1.0 - t) / (1.0 - p)))
                .collect();
            parent.accumulate_grad(&gp);
        })),
    ))
}

/// Row-wise softmax outside the graph (for inspection and accuracy counts).
pub fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let rows = logits.len() / classes;
    let mut out = vec![0.0; logits.len()];
    for i in 0..rows {
        let row = &logits[i * classes..(i + 1) * classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for (j, &v) in row.iter().enumerate() {
            let e = (v - max).exp();
            out[i * classes + j] = e;
            denom += e;
        }
        for j in 0..classes {
            out[i * classes + j] /= denom;
        }
    }
    out
}
