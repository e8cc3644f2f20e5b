//! Micro-averaged F1 and AUROC plus ROC curve export.
//!
//! AUROC is computed as a rank statistic (Mann-Whitney with average ranks for
//! ties): the probability a random positive outranks a random negative, ties
//! counted half. Curve integration exists as an internal cross-check; the two
//! must agree to 1e-12.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("metric undefined: labels contain only one class ({0} positives of {1})")]
    SingleClass(usize, usize),
    #[error("shape mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

fn check_binary_pair(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass(pos, labels.len()));
    }
    Ok((pos, neg))
}

/// Probability that a random positive is scored above a random negative,
/// ties at half credit. Average-rank formulation; exact, O(n log n).
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_binary_pair(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("NaN score"));

    // Average ranks over tie groups, 1-based.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Micro-averaged AUROC: every (example, class) cell pooled into one ranking.
pub fn micro_auroc(scores: &[Vec<f64>], labels: &[Vec<u8>]) -> Result<f64> {
    let (flat_s, flat_l) = flatten(scores, labels)?;
    auroc(&flat_s, &flat_l)
}

fn flatten(scores: &[Vec<f64>], labels: &[Vec<u8>]) -> Result<(Vec<f64>, Vec<u8>)> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    let mut flat_s = Vec::new();
    let mut flat_l = Vec::new();
    for (s, l) in scores.iter().zip(labels) {
        if s.len() != l.len() {
            return Err(MetricError::LengthMismatch(s.len(), l.len()));
        }
        flat_s.extend_from_slice(s);
        flat_l.extend_from_slice(l);
    }
    Ok((flat_s, flat_l))
}

/// Micro-averaged F1 over all cells. A zero denominator (no positives
/// anywhere) yields 0.0 with the degenerate flag set.
pub fn f1_micro(predicted: &[Vec<u8>], actual: &[Vec<u8>]) -> Result<(f64, bool)> {
    if predicted.len() != actual.len() {
        return Err(MetricError::LengthMismatch(predicted.len(), actual.len()));
    }
    let (mut tp, mut fp, mut fne) = (0u64, 0u64, 0u64);
    for (p, a) in predicted.iter().zip(actual) {
        if p.len() != a.len() {
            return Err(MetricError::LengthMismatch(p.len(), a.len()));
        }
        for (&pi, &ai) in p.iter().zip(a) {
            match (pi, ai) {
                (1, 1) => tp += 1,
                (1, 0) => fp += 1,
                (0, 1) => fne += 1,
                _ => {}
            }
        }
    }
    let denom = 2 * tp + fp + fne;
    if denom == 0 {
        return Ok((0.0, true));
    }
    Ok((2.0 * tp as f64 / denom as f64, false))
}

/// One (fpr, tpr) point per distinct score threshold, descending, from (0,0)
/// to (1,1). Trapezoidal area over these points equals the rank AUROC.
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = check_binary_pair(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("NaN score"));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let thr = scores[order[i]];
        while i < order.len() && scores[order[i]] == thr {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: thr,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(points)
}

/// Trapezoidal area under a ROC point list.
pub fn roc_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Per-class evaluation slice. `auc` is absent when the class has a single
/// label value in the evaluation set (undefined, never reported as 0).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub auc: Option<f64>,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub support: usize,
    pub degenerate: bool,
    pub roc: Vec<RocPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_examples: usize,
    pub classes: Vec<ClassMetrics>,
    pub micro_auc: Option<f64>,
    pub micro_f1: f64,
    pub micro_f1_degenerate: bool,
    /// F1 at the default 0.5 threshold is `micro_f1`; this is the threshold
    /// that maximizes micro F1, reported for transparency.
    pub best_f1_threshold: f64,
    pub best_f1: f64,
    pub micro_roc: Vec<RocPoint>,
}

/// Full evaluation of per-class scores against binary labels.
/// `threshold` discretizes scores for the F1 computation (default 0.5).
pub fn evaluate(
    class_names: &[String],
    scores: &[Vec<f64>],
    labels: &[Vec<u8>],
    threshold: f64,
) -> Result<EvalReport> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(MetricError::Invalid(format!(
            "threshold must be in [0, 1], got {threshold}"
        )));
    }
    if scores.is_empty() {
        return Err(MetricError::Invalid("empty evaluation set".into()));
    }
    let n_classes = class_names.len();
    for row in scores.iter() {
        if row.len() != n_classes {
            return Err(MetricError::LengthMismatch(row.len(), n_classes));
        }
    }
    let predicted: Vec<Vec<u8>> = scores
        .iter()
        .map(|row| row.iter().map(|&s| u8::from(s >= threshold)).collect())
        .collect();

    let mut classes = Vec::with_capacity(n_classes);
    for (c, name) in class_names.iter().enumerate() {
        let col_scores: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        let col_labels: Vec<u8> = labels.iter().map(|r| r[c]).collect();
        let col_pred: Vec<u8> = predicted.iter().map(|r| r[c]).collect();
        let support = col_labels.iter().filter(|&&l| l == 1).count();

        let (auc, roc) = match auroc(&col_scores, &col_labels) {
            Ok(a) => (Some(a), roc_points(&col_scores, &col_labels)?),
            Err(MetricError::SingleClass(..)) => (None, Vec::new()),
            Err(e) => return Err(e),
        };
        let tp = col_pred
            .iter()
            .zip(&col_labels)
            .filter(|&(&p, &a)| p == 1 && a == 1)
            .count();
        let pred_pos = col_pred.iter().filter(|&&p| p == 1).count();
        let precision = if pred_pos > 0 {
            tp as f64 / pred_pos as f64
        } else {
            0.0
        };
        let recall = if support > 0 {
            tp as f64 / support as f64
        } else {
            0.0
        };
        let denom = 2 * tp + (pred_pos - tp) + (support - tp);
        let (f1, degenerate) = if denom == 0 {
            (0.0, true)
        } else {
            (2.0 * tp as f64 / denom as f64, false)
        };
        classes.push(ClassMetrics {
            class: name.clone(),
            auc,
            f1,
            precision,
            recall,
            support,
            degenerate,
            roc,
        });
    }

    let (micro_auc, micro_roc) = match micro_auroc(scores, labels) {
        Ok(a) => {
            let (fs, fl) = flatten(scores, labels)?;
            (Some(a), roc_points(&fs, &fl)?)
        }
        Err(MetricError::SingleClass(..)) => (None, Vec::new()),
        Err(e) => return Err(e),
    };
    let (micro_f1, micro_f1_degenerate) = f1_micro(&predicted, labels)?;

    let (best_f1_threshold, best_f1) = best_threshold(scores, labels)?;

    Ok(EvalReport {
        n_examples: scores.len(),
        classes,
        micro_auc,
        micro_f1,
        micro_f1_degenerate,
        best_f1_threshold,
        best_f1,
        micro_roc,
    })
}

/// Sweep every distinct score as a threshold, return the micro-F1 maximizer.
fn best_threshold(scores: &[Vec<f64>], labels: &[Vec<u8>]) -> Result<(f64, f64)> {
    let mut candidates: Vec<f64> = scores.iter().flatten().copied().collect();
    candidates.push(0.5);
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("NaN score"));
    candidates.dedup();
    let mut best = (0.5, 0.0);
    for &t in &candidates {
        let predicted: Vec<Vec<u8>> = scores
            .iter()
            .map(|row| row.iter().map(|&s| u8::from(s >= t)).collect())
            .collect();
        let (f1, _) = f1_micro(&predicted, labels)?;
        if f1 > best.1 {
            best = (t, f1);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(n^2) pairwise-counting oracle, tie-aware.
    pub fn auroc_pairwise(scores: &[f64], labels: &[u8]) -> f64 {
        let mut correct = 0.0;
        let mut total = 0.0;
        for (i, (&si, &li)) in scores.iter().zip(labels).enumerate() {
            for (&sj, &lj) in scores.iter().zip(labels).skip(i + 1) {
                let (sp, sn) = match (li, lj) {
                    (1, 0) => (si, sj),
                    (0, 1) => (sj, si),
                    _ => continue,
                };
                total += 1.0;
                if sp > sn {
                    correct += 1.0;
                } else if sp == sn {
                    correct += 0.5;
                }
            }
        }
        correct / total
    }

    #[test]
    fn perfectly_ranked_scores_give_one() {
        let s = [0.9, 0.8, 0.2, 0.1];
        let l = [1, 1, 0, 0];
        assert_eq!(auroc(&s, &l).unwrap(), 1.0);
    }

    #[test]
    fn interleaved_ranking_example() {
        let s = [0.9, 0.8, 0.3, 0.2];
        let l = [1, 0, 1, 0];
        assert_eq!(auroc(&s, &l).unwrap(), 0.75);
    }

    #[test]
    fn all_ties_give_half() {
        let s = [0.5, 0.5, 0.5, 0.5];
        let l = [1, 0, 1, 0];
        assert_eq!(auroc(&s, &l).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_undefined_not_zero() {
        let s = [0.1, 0.2];
        assert!(matches!(
            auroc(&s, &[1, 1]),
            Err(MetricError::SingleClass(2, 2))
        ));
        assert!(auroc(&s, &[0, 0]).is_err());
    }

    #[test]
    fn rank_auroc_matches_pairwise_oracle_on_random_and_tied_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        for case in 0..100 {
            let n = rng.gen_range(5..=200);
            // Half the cases are tie-heavy: scores snapped to a tiny grid.
            let tie_heavy = case % 2 == 0;
            let scores: Vec<f64> = (0..n)
                .map(|_| {
                    let s: f64 = rng.gen();
                    if tie_heavy {
                        (s * 4.0).round() / 4.0
                    } else {
                        s
                    }
                })
                .collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            labels[0] = 1;
            labels[1] = 0;
            let fast = auroc(&scores, &labels).unwrap();
            let slow = auroc_pairwise(&scores, &labels);
            assert_eq!(fast, slow, "case {case} n={n}");
        }
    }

    #[test]
    fn micro_auroc_single_class_equals_plain() {
        let s = vec![vec![0.9], vec![0.8], vec![0.3], vec![0.2]];
        let l = vec![vec![1], vec![0], vec![1], vec![0]];
        assert_eq!(micro_auroc(&s, &l).unwrap(), 0.75);
    }

    #[test]
    fn micro_auroc_duplicated_columns_invariant() {
        let s = vec![vec![0.9, 0.9], vec![0.8, 0.8], vec![0.3, 0.3], vec![0.2, 0.2]];
        let l = vec![vec![1, 1], vec![0, 0], vec![1, 1], vec![0, 0]];
        assert_eq!(micro_auroc(&s, &l).unwrap(), 0.75);
    }

    #[test]
    fn micro_auroc_matches_flattened_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let scores: Vec<Vec<f64>> = (0..20).map(|_| (0..3).map(|_| rng.gen()).collect()).collect();
        let mut labels: Vec<Vec<u8>> = (0..20)
            .map(|_| (0..3).map(|_| rng.gen_range(0..=1)).collect())
            .collect();
        labels[0][0] = 1;
        labels[1][0] = 0;
        let flat_s: Vec<f64> = scores.iter().flatten().copied().collect();
        let flat_l: Vec<u8> = labels.iter().flatten().copied().collect();
        assert_eq!(
            micro_auroc(&scores, &labels).unwrap(),
            auroc_pairwise(&flat_s, &flat_l)
        );
    }

    #[test]
    fn f1_perfect_prediction() {
        let y = vec![vec![1, 0], vec![0, 1]];
        let (f1, flag) = f1_micro(&y, &y).unwrap();
        assert_eq!(f1, 1.0);
        assert!(!flag);
    }

    #[test]
    fn f1_hand_computed_counts() {
        // TP=2, FP=1, FN=1 -> 4/6
        let predicted = vec![vec![1, 1, 1, 0]];
        let actual = vec![vec![1, 1, 0, 1]];
        let (f1, _) = f1_micro(&predicted, &actual).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_all_negative_predictions_is_zero_with_flag() {
        let predicted = vec![vec![0, 0]];
        let actual = vec![vec![1, 0]];
        let (f1, flag) = f1_micro(&predicted, &actual).unwrap();
        assert_eq!(f1, 0.0);
        assert!(!flag); // denominator nonzero (FN=1)
        let (f1b, flagb) = f1_micro(&vec![vec![0, 0]], &vec![vec![0, 0]]).unwrap();
        assert_eq!(f1b, 0.0);
        assert!(flagb);
    }

    #[test]
    fn roc_perfect_separation_path() {
        let s = [0.9, 0.8, 0.2, 0.1];
        let l = [1, 1, 0, 0];
        let pts = roc_points(&s, &l).unwrap();
        let path: Vec<(f64, f64)> = pts.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(path.first(), Some(&(0.0, 0.0)));
        assert!(path.contains(&(0.0, 1.0)));
        assert_eq!(path.last(), Some(&(1.0, 1.0)));
        assert_eq!(roc_area(&pts), 1.0);
    }

    #[test]
    fn roc_single_score_is_diagonal() {
        let s = [0.5, 0.5, 0.5];
        let l = [1, 0, 1];
        let pts = roc_points(&s, &l).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(roc_area(&pts), 0.5);
    }

    #[test]
    fn roc_area_equals_rank_auroc() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let n = rng.gen_range(4..100);
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() * 10.0).round() / 10.0).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            labels[0] = 1;
            labels[1] = 0;
            let area = roc_area(&roc_points(&scores, &labels).unwrap());
            let rank = auroc(&scores, &labels).unwrap();
            assert!((area - rank).abs() < 1e-12, "area {area} vs rank {rank}");
        }
    }

    #[test]
    fn auroc_invariant_under_monotone_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let scores: Vec<f64> = (0..60).map(|_| rng.gen()).collect();
        let mut labels: Vec<u8> = (0..60).map(|_| rng.gen_range(0..=1)).collect();
        labels[0] = 1;
        labels[1] = 0;
        let base = auroc(&scores, &labels).unwrap();
        let exp_scores: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        let affine_scores: Vec<f64> = scores.iter().map(|s| 3.0 * s + 7.0).collect();
        assert_eq!(auroc(&exp_scores, &labels).unwrap(), base);
        assert_eq!(auroc(&affine_scores, &labels).unwrap(), base);
    }

    #[test]
    fn auroc_label_complement_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let scores: Vec<f64> = (0..40).map(|_| (rng.gen::<f64>() * 5.0).round() / 5.0).collect();
        let mut labels: Vec<u8> = (0..40).map(|_| rng.gen_range(0..=1)).collect();
        labels[0] = 1;
        labels[1] = 0;
        let flipped: Vec<u8> = labels.iter().map(|&l| 1 - l).collect();
        let sum = auroc(&scores, &labels).unwrap() + auroc(&scores, &flipped).unwrap();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_produces_consistent_report() {
        let names = vec!["a".to_string(), "b".to_string()];
        let scores = vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.7, 0.6], vec![0.1, 0.4]];
        let labels = vec![vec![1, 0], vec![0, 1], vec![1, 1], vec![0, 0]];
        let report = evaluate(&names, &scores, &labels, 0.5).unwrap();
        assert_eq!(report.n_examples, 4);
        assert_eq!(report.classes.len(), 2);
        let support_sum: usize = report.classes.iter().map(|c| c.support).sum();
        assert_eq!(support_sum, 4);
        assert!(report.micro_auc.is_some());
        assert!(report.best_f1 >= report.micro_f1);
        for c in &report.classes {
            let area = roc_area(&c.roc);
            assert!((area - c.auc.unwrap()).abs() < 1e-12);
        }
    }
}
