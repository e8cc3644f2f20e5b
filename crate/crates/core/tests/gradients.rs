//! Finite-difference sweep over every differentiable operation, five seeded
//! random instances each.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relm_core::gradcheck::assert_gradients;
use relm_core::tensor::{
    binary_cross_entropy, softmax_cross_entropy, softmax_cross_entropy_weighted, Tensor,
};

const H: f64 = 1e-6;
const TOL: f64 = 1e-4;
const SEEDS: [u64; 5] = [11, 22, 33, 44, 55];

fn randn(shape: &[usize], scale: f64, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::rand_uniform(shape, scale, &mut rng).requires_grad()
}

/// Uniform values bounded away from zero, for ops with kinks or poles there.
fn rand_offset(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.2..1.0);
            if rng.gen::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::from_vec(data, shape).unwrap().requires_grad()
}

#[test]
fn elementwise_binary_ops() {
    for seed in SEEDS {
        let a = randn(&[3, 4], 1.0, seed);
        let b = randn(&[3, 4], 1.0, seed + 100);
        assert_gradients(
            &[a.clone(), b.clone()],
            |p| Ok(p[0].add(&p[1])?.mul(&p[0].sub(&p[1])?)?.sum()),
            H,
            TOL,
        );
    }
}

#[test]
fn scalar_ops_and_activations() {
    for seed in SEEDS {
        let a = randn(&[2, 5], 1.5, seed);
        assert_gradients(
            &[a.clone()],
            |p| {
                Ok(p[0]
                    .scale(1.7)
                    .add_scalar(0.3)
                    .sigmoid()
                    .tanh()
                    .sum())
            },
            H,
            TOL,
        );
    }
}

#[test]
fn relu_away_from_kink() {
    for seed in SEEDS {
        let a = rand_offset(&[3, 3], seed);
        assert_gradients(&[a.clone()], |p| Ok(p[0].relu().sum()), H, TOL);
    }
}

#[test]
fn exp_and_log() {
    for seed in SEEDS {
        let a = rand_offset(&[2, 4], seed);
        assert_gradients(
            &[a.clone()],
            |p| Ok(p[0].mul(&p[0])?.add_scalar(0.5).log().exp().mean()),
            H,
            TOL,
        );
    }
}

#[test]
fn matmul_and_bias() {
    for seed in SEEDS {
        let a = randn(&[3, 4], 1.0, seed);
        let b = randn(&[4, 2], 1.0, seed + 1);
        let bias = randn(&[1, 2], 1.0, seed + 2);
        assert_gradients(
            &[a.clone(), b.clone(), bias.clone()],
            |p| Ok(p[0].matmul(&p[1])?.add_rowvec(&p[2])?.tanh().sum()),
            H,
            TOL,
        );
    }
}

#[test]
fn slicing_and_concatenation() {
    for seed in SEEDS {
        let a = randn(&[2, 6], 1.0, seed);
        let b = randn(&[2, 3], 1.0, seed + 1);
        assert_gradients(
            &[a.clone(), b.clone()],
            |p| {
                let left = p[0].slice_cols(0, 3)?;
                let right = p[0].slice_cols(3, 6)?;
                let cols = Tensor::concat_cols(&[left.clone(), p[1].clone()])?;
                let rows = Tensor::concat_rows(&[right, p[1].clone()])?;
                Ok(cols.sum().add(&rows.sigmoid().sum())?)
            },
            H,
            TOL,
        );
    }
}

#[test]
fn row_reductions() {
    for seed in SEEDS {
        let a = randn(&[4, 3], 1.0, seed);
        assert_gradients(
            &[a.clone()],
            |p| Ok(p[0].mean_rows()?.tanh().sum().add(&p[0].max_rows()?.sum())?),
            H,
            TOL,
        );
    }
}

#[test]
fn embedding_gather() {
    for seed in SEEDS {
        let table = randn(&[6, 3], 1.0, seed);
        let indices = vec![0, 2, 2, 5, 1];
        assert_gradients(
            &[table.clone()],
            |p| Ok(Tensor::embedding(&p[0], &indices)?.tanh().sum()),
            H,
            TOL,
        );
    }
}

#[test]
fn dropout_with_fixed_mask() {
    for seed in SEEDS {
        let a = randn(&[4, 4], 1.0, seed);
        assert_gradients(
            &[a.clone()],
            |p| {
                // reseeding per call keeps the mask constant across the
                // finite-difference re-evaluations
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd0);
                Ok(p[0].dropout(0.4, true, &mut rng)?.sum())
            },
            H,
            TOL,
        );
    }
}

#[test]
fn fused_losses() {
    for seed in SEEDS {
        let logits = randn(&[4, 7], 1.0, seed);
        let targets = vec![0, 3, 6, 2];
        assert_gradients(
            &[logits.clone()],
            |p| softmax_cross_entropy(&p[0], &targets),
            H,
            TOL,
        );
        let weights = vec![1.0, 0.0, 2.0, 0.5];
        assert_gradients(
            &[logits.clone()],
            |p| softmax_cross_entropy_weighted(&p[0], &targets, &weights),
            H,
            TOL,
        );

        let raw = randn(&[3, 2], 2.0, seed + 7);
        let labels = Tensor::from_vec(vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0], &[3, 2]).unwrap();
        assert_gradients(
            &[raw.clone()],
            |p| binary_cross_entropy(&p[0].sigmoid(), &labels),
            H,
            TOL,
        );
    }
}

#[test]
fn unrolled_six_token_lm_loss() {
    use relm_core::langmodel::{LanguageModel, LmConfig, Pooling};
    for seed in SEEDS {
        let config = LmConfig {
            vocab_size: 12,
            embedding_dim: 4,
            hidden_dim: 4,
            num_layers: 1,
            dropout: 0.0,
            bptt_window: 16,
            batch_size: 1,
            pooling: Pooling::Mean,
        };
        let model = LanguageModel::new(&config, seed).unwrap();
        let seq = vec![6, 7, 8, 9, 10, 11];
        let params: Vec<Tensor> = model
            .named_parameters()
            .into_iter()
            .map(|(_, t)| t)
            .collect();
        // manual unroll of the forward-direction next-token loss
        assert_gradients(
            &params,
            |_| {
                let cell = &model.forward_stack[0];
                let mut h = Tensor::zeros(&[1, 4]);
                let mut c = Tensor::zeros(&[1, 4]);
                let mut logits = Vec::new();
                let mut targets = Vec::new();
                for t in 0..seq.len() - 1 {
                    let x = Tensor::embedding(&model.embedding, &seq[t..t + 1])?;
                    let (nh, nc) = cell.step(&x, &h, &c)?;
                    h = nh;
                    c = nc;
                    logits.push(h.matmul(&model.forward_proj_w)?.add_rowvec(&model.forward_proj_b)?);
                    targets.push(seq[t + 1]);
                }
                softmax_cross_entropy(&Tensor::concat_rows(&logits)?, &targets)
            },
            H,
            TOL,
        );
    }
}
