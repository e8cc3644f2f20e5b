use super::*;
use crate::gradcheck::assert_gradients;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn matmul_identity() {
    let i2 = Tensor::from_vec(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
    let a = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
    let c = i2.matmul(&a).unwrap();
    assert_eq!(c.to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn matmul_dot_product() {
    let a = Tensor::from_vec(vec![1.0, 2.0], &[1, 2]).unwrap();
    let b = Tensor::from_vec(vec![3.0, 4.0], &[2, 1]).unwrap();
    let c = a.matmul(&b).unwrap();
    assert_eq!(c.shape(), &[1, 1]);
    assert_eq!(c.item(), 11.0);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let a = Tensor::zeros(&[2, 3]);
    let b = Tensor::zeros(&[2, 3]);
    let err = a.matmul(&b).unwrap_err().to_string();
    assert!(err.contains("[2, 3]"), "error should name shapes: {err}");
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut r = rng(7);
    let a = Tensor::rand_uniform(&[3, 2], 1.0, &mut r).requires_grad();
    let b = Tensor::rand_uniform(&[2, 4], 1.0, &mut r).requires_grad();
    assert_gradients(
        &[a, b],
        |p| p[0].matmul(&p[1])?.sum().backward_ready(),
        1e-6,
        1e-6,
    );
}

// Small helper so closures can return Result<Tensor> uniformly.
trait BackwardReady {
    fn backward_ready(self) -> Result<Tensor>;
}
impl BackwardReady for Tensor {
    fn backward_ready(self) -> Result<Tensor> {
        Ok(self)
    }
}

#[test]
fn sigmoid_and_tanh_anchor_points() {
    let x = Tensor::scalar(0.0);
    assert_eq!(x.sigmoid().item(), 0.5);
    assert_eq!(x.tanh().item(), 0.0);
}

#[test]
fn sigmoid_gradient_at_one_matches_finite_difference() {
    let x = Tensor::scalar(1.0).requires_grad();
    assert_gradients(&[x], |p| p[0].sigmoid().sum().backward_ready(), 1e-6, 1e-6);
}

#[test]
fn elementwise_shape_mismatch_is_an_error() {
    let a = Tensor::zeros(&[2, 2]);
    let b = Tensor::zeros(&[2, 3]);
    assert!(a.add(&b).is_err());
    assert!(a.mul(&b).is_err());
}

#[test]
fn log_domain_violation_counts_but_does_not_crash() {
    reset_nonfinite_op_count();
    let x = Tensor::from_vec(vec![0.0, -1.0, 1.0], &[3]).unwrap();
    let y = x.log();
    assert!(y.to_vec()[0].is_infinite());
    assert!(y.to_vec()[1].is_nan());
    assert_eq!(nonfinite_op_count(), 2);
    reset_nonfinite_op_count();
}

#[test]
fn diamond_graph_accumulates_gradients_additively() {
    // x feeds two consumers; d/dx [sigmoid(x) + tanh(x)] at 0 = 0.25 + 1.0
    let x = Tensor::scalar(0.0).requires_grad();
    let loss = x.sigmoid().add(&x.tanh()).unwrap().sum();
    loss.backward().unwrap();
    let g = x.grad().unwrap()[0];
    assert!((g - 1.25).abs() < 1e-12, "got {g}");
}

#[test]
fn softmax_cross_entropy_uniform_logits_is_ln_v() {
    let logits = Tensor::zeros(&[3, 18]);
    let loss = softmax_cross_entropy(&logits, &[0, 5, 17]).unwrap();
    assert!((loss.item() - (18.0f64).ln()).abs() < 1e-12);
}

#[test]
fn softmax_cross_entropy_confident_correct_prediction() {
    let logits = Tensor::from_vec(vec![10.0, -10.0], &[1, 2]).unwrap();
    let loss = softmax_cross_entropy(&logits, &[0]).unwrap();
    // -ln sigmoid(20) = ln(1 + e^-20)
    let expected = (1.0 + (-20.0f64).exp()).ln();
    assert!((loss.item() - expected).abs() < 1e-15);
    assert!(loss.item() < 2.1e-9);
}

#[test]
fn softmax_cross_entropy_gradient_matches_finite_differences() {
    let mut r = rng(11);
    let logits = Tensor::rand_uniform(&[4, 7], 2.0, &mut r).requires_grad();
    let targets = vec![0, 3, 6, 2];
    assert_gradients(
        &[logits],
        |p| softmax_cross_entropy(&p[0], &targets),
        1e-6,
        1e-6,
    );
}

#[test]
fn softmax_cross_entropy_rejects_out_of_range_target() {
    let logits = Tensor::zeros(&[2, 3]);
    let err = softmax_cross_entropy(&logits, &[0, 3]).unwrap_err().to_string();
    assert!(err.contains("row 1"), "should name the row: {err}");
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut r = rng(3);
    let logits = Tensor::rand_uniform(&[5, 9], 4.0, &mut r);
    let sm = softmax_rows(&logits.data(), 9);
    for i in 0..5 {
        let s: f64 = sm[i * 9..(i + 1) * 9].iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn binary_cross_entropy_maximum_entropy_prediction() {
    let p = Tensor::from_vec(vec![0.5; 6], &[2, 3]).unwrap();
    let y = Tensor::from_vec(vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0], &[2, 3]).unwrap();
    let loss = binary_cross_entropy(&p, &y).unwrap();
    assert!((loss.item() - (2.0f64).ln()).abs() < 1e-12);
}

#[test]
fn binary_cross_entropy_perfect_prediction() {
    let y = Tensor::from_vec(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
    let p = y.detach();
    let loss = binary_cross_entropy(&p, &y).unwrap();
    assert!(loss.item() <= 2.8e-11, "got {}", loss.item());
}

#[test]
fn binary_cross_entropy_matches_direct_scalar_evaluation() {
    let mut r = rng(21);
    let probs: Vec<f64> = (0..15).map(|_| r.gen_range(0.05..0.95)).collect();
    let targets: Vec<f64> = (0..15).map(|_| if r.gen::<bool>() { 1.0 } else { 0.0 }).collect();
    let p = Tensor::from_vec(probs.clone(), &[3, 5]).unwrap();
    let y = Tensor::from_vec(targets.clone(), &[3, 5]).unwrap();
    let loss = binary_cross_entropy(&p, &y).unwrap().item();
    let direct = probs
        .iter()
        .zip(&targets)
        .map(|(&p, &t)| -(t * p.ln() + (1.0 - t) * (1.0 - p).ln()))
        .sum::<f64>()
        / 15.0;
    assert!((loss - direct).abs() < 1e-12);
}

#[test]
fn binary_cross_entropy_rejects_non_binary_targets() {
    let p = Tensor::from_vec(vec![0.5], &[1, 1]).unwrap();
    let y = Tensor::from_vec(vec![0.3], &[1, 1]).unwrap();
    assert!(binary_cross_entropy(&p, &y).is_err());
}

#[test]
fn dropout_rate_zero_is_identity() {
    let x = Tensor::from_vec(vec![1.0, 2.0, 3.0], &[3]).unwrap();
    let y = x.dropout(0.0, true, &mut rng(0)).unwrap();
    assert_eq!(y.to_vec(), x.to_vec());
}

#[test]
fn dropout_inference_mode_is_identity() {
    let x = Tensor::from_vec(vec![1.0, 2.0, 3.0], &[3]).unwrap();
    let y = x.dropout(0.9, false, &mut rng(0)).unwrap();
    assert_eq!(y.to_vec(), x.to_vec());
}

#[test]
fn dropout_preserves_expectation() {
    let x = Tensor::ones(&[100_000]);
    let y = x.dropout(0.5, true, &mut rng(42)).unwrap();
    let mean = y.to_vec().iter().sum::<f64>() / 100_000.0;
    assert!((0.98..=1.02).contains(&mean), "mean {mean}");
}

#[test]
fn dropout_rejects_rate_one() {
    let x = Tensor::ones(&[4]);
    assert!(x.dropout(1.0, true, &mut rng(0)).is_err());
}

#[test]
fn sgd_single_step() {
    let w = Tensor::scalar(1.0).requires_grad();
    let mut opt = Optimizer::sgd(0.1, 0.0);
    opt.register("w", &w);
    w.accumulate_grad(&[1.0]);
    opt.step().unwrap();
    assert!((w.item() - 0.9).abs() < 1e-15);
}

#[test]
fn sgd_decoupled_weight_decay() {
    let w = Tensor::scalar(1.0).requires_grad();
    let mut opt = Optimizer::sgd(0.1, 0.1);
    opt.register("w", &w);
    w.accumulate_grad(&[0.0]);
    opt.step().unwrap();
    assert!((w.item() - 0.99).abs() < 1e-15);
}

#[test]
fn sgd_zero_grad_zero_l2_is_a_fixed_point() {
    let w = Tensor::scalar(1.0).requires_grad();
    let mut opt = Optimizer::sgd(0.1, 0.0);
    opt.register("w", &w);
    w.accumulate_grad(&[0.0]);
    opt.step().unwrap();
    assert_eq!(w.item(), 1.0);
}

#[test]
fn step_without_backward_is_a_state_error() {
    let w = Tensor::scalar(1.0).requires_grad();
    let mut opt = Optimizer::adam(0.1, 0.0);
    opt.register("w", &w);
    let err = opt.step().unwrap_err().to_string();
    assert!(err.contains('w'), "error should name the parameter: {err}");
}

#[test]
fn step_leaves_unregistered_tensors_untouched() {
    let w = Tensor::scalar(1.0).requires_grad();
    let other = Tensor::scalar(5.0).requires_grad();
    let mut opt = Optimizer::sgd(0.5, 0.0);
    opt.register("w", &w);
    w.accumulate_grad(&[1.0]);
    other.accumulate_grad(&[1.0]);
    opt.step().unwrap();
    assert_eq!(other.item(), 5.0);
    assert!(other.grad().is_some());
}

#[test]
fn adam_moves_toward_minimum() {
    let w = Tensor::scalar(3.0).requires_grad();
    let mut opt = Optimizer::adam(0.1, 0.0);
    opt.register("w", &w);
    for _ in 0..200 {
        let loss = w.mul(&w).unwrap().sum();
        loss.backward().unwrap();
        opt.step().unwrap();
    }
    assert!(w.item().abs() < 0.05, "got {}", w.item());
}

#[test]
fn identical_seed_and_ops_are_bit_identical() {
    let run = || {
        let mut r = rng(99);
        let a = Tensor::rand_uniform(&[4, 4], 1.0, &mut r).requires_grad();
        let b = Tensor::rand_uniform(&[4, 4], 1.0, &mut r);
        let loss = a
            .matmul(&b)
            .unwrap()
            .sigmoid()
            .dropout(0.3, true, &mut r)
            .unwrap()
            .sum();
        loss.backward().unwrap();
        (loss.item(), a.grad().unwrap())
    };
    let (l1, g1) = run();
    let (l2, g2) = run();
    assert_eq!(l1.to_bits(), l2.to_bits());
    assert_eq!(g1, g2);
}

#[test]
fn embedding_gather_and_scatter_gradient() {
    let w = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[3, 2]).unwrap().requires_grad();
    let out = Tensor::embedding(&w, &[2, 0, 2]).unwrap();
    assert_eq!(out.to_vec(), vec![5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
    let loss = out.sum();
    loss.backward().unwrap();
    // row 2 gathered twice -> grad 2, row 0 once -> 1, row 1 never -> 0
    assert_eq!(w.grad().unwrap(), vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
}

#[test]
fn slice_and_concat_round_trip_gradient() {
    let mut r = rng(5);
    let x = Tensor::rand_uniform(&[3, 6], 1.0, &mut r).requires_grad();
    assert_gradients(
        &[x],
        |p| {
            let left = p[0].slice_cols(0, 3)?;
            let right = p[0].slice_cols(3, 6)?;
            Tensor::concat_cols(&[right.tanh(), left.sigmoid()])?.sum().backward_ready()
        },
        1e-6,
        1e-6,
    );
}
