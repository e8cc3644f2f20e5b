//! Independent oracles for the vectorization layer: tfidf against a direct
//! evaluation of its defining formulas, and the truncated power-iteration SVD
//! against a dense symmetric eigendecomposition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relm_core::vectorize::{fit_truncated_svd, TfidfModel};

#[test]
fn tfidf_matches_direct_formula_on_seeded_corpora() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_terms = rng.gen_range(5..15);
        let n_docs = rng.gen_range(2..12);
        let docs: Vec<Vec<usize>> = (0..n_docs)
            .map(|_| {
                let len = rng.gen_range(1..20);
                (0..len).map(|_| rng.gen_range(0..n_terms)).collect()
            })
            .collect();
        let model = TfidfModel::fit(&docs, n_terms).unwrap();

        for doc in &docs {
            let dense = model.transform_dense(doc);
            for t in 0..n_terms {
                // direct evaluation: tf(t, d) * ln(|D| / (1 + df(t)))
                let tf = doc.iter().filter(|&&x| x == t).count() as f64;
                let df = docs.iter().filter(|d| d.contains(&t)).count() as f64;
                let expected = tf * (n_docs as f64 / (1.0 + df)).ln();
                assert!(
                    (dense[t] - expected).abs() < 1e-9,
                    "seed {seed} term {t}: {} vs {expected}",
                    dense[t]
                );
            }
        }
    }
}

#[test]
fn truncated_svd_matches_dense_eigendecomposition() {
    for seed in 0..10u64 {
        let (n, d, k) = (10, 8, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let matrix: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let model = fit_truncated_svd(&matrix, n, d, k, false, seed).unwrap();

        // oracle: eigenvalues of the d x d Gram matrix A^T A
        let a = nalgebra::DMatrix::from_row_slice(n, d, &matrix);
        let gram = a.transpose() * &a;
        let eigen = nalgebra::SymmetricEigen::new(gram);
        let mut eigenvalues: Vec<f64> = eigen.eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(|x, y| y.total_cmp(x));

        for (i, sigma) in model.singular_values.iter().enumerate() {
            let expected = eigenvalues[i].max(0.0).sqrt();
            assert!(
                (sigma - expected).abs() < 1e-6,
                "seed {seed} sigma_{i}: {sigma} vs {expected}"
            );
        }
    }
}

#[test]
fn truncated_svd_directions_are_singular_vectors() {
    // A v_i should have norm sigma_i and be orthogonal across i.
    let (n, d, k) = (10, 8, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let matrix: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let model = fit_truncated_svd(&matrix, n, d, k, false, 1).unwrap();
    let a = nalgebra::DMatrix::from_row_slice(n, d, &matrix);
    for i in 0..k {
        let v = nalgebra::DVector::from_row_slice(&model.directions[i * d..(i + 1) * d]);
        let av = &a * &v;
        assert!((av.norm() - model.singular_values[i]).abs() < 1e-6);
        for j in 0..i {
            let u = nalgebra::DVector::from_row_slice(&model.directions[j * d..(j + 1) * d]);
            assert!(v.dot(&u).abs() < 1e-8, "v_{i} not orthogonal to v_{j}");
        }
    }
}
