//! TFIDF document vectors, cosine similarity, and truncated SVD projection.
//!
//! idf(t) = ln(|D| / (1 + df(t))), exactly as written: no smoothing beyond
//! the +1 in the denominator, natural log, and negative values (df + 1 > |D|)
//! retained verbatim. The SVD is orthogonal block power iteration on the
//! (optionally column-centered) matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VectorizeError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("cosine similarity undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("k={k} out of range: must satisfy 1 <= k <= min(n={n}, d={d})")]
    KOutOfRange { k: usize, n: usize, d: usize },
    #[error("dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, VectorizeError>;

/// Sparse (term index, weight) vector, sorted by index, zero entries omitted.
pub type SparseVec = Vec<(usize, f64)>;

/// Document frequencies over a fitted corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TfidfModel {
    /// Term dimension (vocabulary size the documents are indexed against).
    pub n_terms: usize,
    /// Documents in the fitting corpus, |D|.
    pub n_documents: usize,
    /// df(t) per term index.
    pub document_frequency: Vec<u32>,
    /// True when some fitted term has negative idf (df + 1 > |D|).
    pub has_negative_idf: bool,
}

impl TfidfModel {
    /// Fits document frequencies from index-encoded documents.
    pub fn fit(documents: &[Vec<usize>], n_terms: usize) -> Result<TfidfModel> {
        if documents.is_empty() {
            return Err(VectorizeError::EmptyCorpus);
        }
        let mut df = vec![0u32; n_terms];
        let mut seen = vec![usize::MAX; n_terms];
        for (doc_id, doc) in documents.iter().enumerate() {
            for &t in doc {
                if seen[t] != doc_id {
                    seen[t] = doc_id;
                    df[t] += 1;
                }
            }
        }
        let n = documents.len();
        let has_negative_idf = df.iter().any(|&d| (d as usize + 1) > n);
        Ok(TfidfModel {
            n_terms,
            n_documents: n,
            document_frequency: df,
            has_negative_idf,
        })
    }

    /// idf(t) = ln(|D| / (1 + df(t))). Negative values are retained.
    pub fn idf(&self, term: usize) -> f64 {
        (self.n_documents as f64 / (1.0 + self.document_frequency[term] as f64)).ln()
    }

    /// tfidf(t, d) = count(t, d) * idf(t); zero-count terms omitted.
    pub fn transform(&self, document: &[usize]) -> SparseVec {
        let mut counts: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
        for &t in document {
            *counts.entry(t).or_insert(0.0) += 1.0;
        }
        counts
            .into_iter()
            .map(|(t, c)| (t, c * self.idf(t)))
            .filter(|&(_, w)| w != 0.0)
            .collect()
    }

    /// Dense transform for feeding models that want a flat feature row.
    pub fn transform_dense(&self, document: &[usize]) -> Vec<f64> {
        let mut row = vec![0.0; self.n_terms];
        for (t, w) in self.transform(document) {
            row[t] = w;
        }
        row
    }
}

/// cos(x, y) = x.y / (||x|| ||y||) over sparse vectors.
pub fn cosine(x: &SparseVec, y: &SparseVec) -> Result<f64> {
    let nx = norm(x);
    let ny = norm(y);
    if nx == 0.0 || ny == 0.0 {
        return Err(VectorizeError::ZeroNorm);
    }
    Ok(dot(x, y) / (nx * ny))
}

fn dot(x: &SparseVec, y: &SparseVec) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0;
    while i < x.len() && j < y.len() {
        match x[i].0.cmp(&y[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += x[i].1 * y[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

fn norm(x: &SparseVec) -> f64 {
    x.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
}

/// Top-k right singular directions of a (centered) data matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionModel {
    pub k: usize,
    pub input_dim: usize,
    /// Row-major k x d right singular vectors, orthonormal rows.
    pub directions: Vec<f64>,
    /// Descending singular values of the (centered) matrix.
    pub singular_values: Vec<f64>,
    /// Column means subtracted before fitting; all zeros in uncentered mode.
    pub column_means: Vec<f64>,
    pub centered: bool,
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 1000;

/// Fits by orthogonal (block power) iteration on A^T A until the subspace
/// stops rotating. `centered` subtracts column means first (the PCA-style
/// mode used for visualization).
pub fn fit_truncated_svd(
    matrix: &[f64],
    n: usize,
    d: usize,
    k: usize,
    centered: bool,
    seed: u64,
) -> Result<ProjectionModel> {
    assert_eq!(matrix.len(), n * d, "matrix buffer size");
    if k < 1 || k > n.min(d) {
        return Err(VectorizeError::KOutOfRange { k, n, d });
    }
    let mut column_means = vec![0.0; d];
    let mut a = matrix.to_vec();
    if centered {
        for j in 0..d {
            let mean: f64 = (0..n).map(|i| matrix[i * d + j]).sum::<f64>() / n as f64;
            column_means[j] = mean;
            for i in 0..n {
                a[i * d + j] -= mean;
            }
        }
    }

    // q: d x k orthonormal block, iterated as q <- orth(A^T A q).
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..d * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    orthonormalize(&mut q, d, k);

    for _ in 0..POWER_MAX_ITER {
        let prev = q.clone();
        // y = A q  (n x k), z = A^T y  (d x k)
        let y = crate::tensor::matmul_nn(&a, &q, n, d, k);
        let mut z = vec![0.0; d * k];
        for i in 0..n {
            for j in 0..d {
                let av = a[i * d + j];
                if av == 0.0 {
                    continue;
                }
                for c in 0..k {
                    z[j * k + c] += av * y[i * k + c];
                }
            }
        }
        q = z;
        orthonormalize(&mut q, d, k);
        if subspace_rotation(&prev, &q, d, k) < POWER_TOL {
            break;
        }
    }

    // Rayleigh quotients give the singular values; re-sort defensively.
    let y = crate::tensor::matmul_nn(&a, &q, n, d, k);
    let mut cols: Vec<(f64, Vec<f64>)> = (0..k)
        .map(|c| {
            let sigma = (0..n).map(|i| y[i * k + c] * y[i * k + c]).sum::<f64>().sqrt();
            let dir: Vec<f64> = (0..d).map(|j| q[j * k + c]).collect();
            (sigma, dir)
        })
        .collect();
    cols.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let mut directions = Vec::with_capacity(k * d);
    let mut singular_values = Vec::with_capacity(k);
    for (sigma, mut dir) in cols {
        // Sign convention: largest-magnitude component non-negative.
        let lead = dir
            .iter()
            .cloned()
            .max_by(|x, y| x.abs().partial_cmp(&y.abs()).unwrap())
            .unwrap_or(0.0);
        if lead < 0.0 {
            for v in &mut dir {
                *v = -*v;
            }
        }
        directions.extend_from_slice(&dir);
        singular_values.push(sigma);
    }

    Ok(ProjectionModel {
        k,
        input_dim: d,
        directions,
        singular_values,
        column_means,
        centered,
    })
}

/// Projects rows into the fitted subspace: (x - mean) V_k, output n x k.
pub fn project(model: &ProjectionModel, vectors: &[f64], n: usize) -> Result<Vec<f64>> {
    let d = model.input_dim;
    if vectors.len() != n * d {
        return Err(VectorizeError::DimensionMismatch {
            expected: n * d,
            got: vectors.len(),
        });
    }
    let mut centered = vectors.to_vec();
    if model.centered {
        for i in 0..n {
            for j in 0..d {
                centered[i * d + j] -= model.column_means[j];
            }
        }
    }
    // directions is k x d; project = centered (n x d) @ directions^T (d x k)
    Ok(crate::tensor::matmul_nt(&centered, &model.directions, n, d, model.k))
}

/// Modified Gram-Schmidt over the columns of a d x k block.
fn orthonormalize(q: &mut [f64], d: usize, k: usize) {
    for c in 0..k {
        for prev in 0..c {
            let mut proj = 0.0;
            for j in 0..d {
                proj += q[j * k + c] * q[j * k + prev];
            }
            for j in 0..d {
                q[j * k + c] -= proj * q[j * k + prev];
            }
        }
        let mut nrm = 0.0;
        for j in 0..d {
            nrm += q[j * k + c] * q[j * k + c];
        }
        let nrm = nrm.sqrt();
        if nrm > 1e-300 {
            for j in 0..d {
                q[j * k + c] /= nrm;
            }
        }
    }
}

/// How far the new orthonormal block rotated away from the old one:
/// max over columns of 1 - |<q_old, q_new>|.
fn subspace_rotation(prev: &[f64], next: &[f64], d: usize, k: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for c in 0..k {
        let mut dp = 0.0;
        for j in 0..d {
            dp += prev[j * k + c] * next[j * k + c];
        }
        worst = worst.max(1.0 - dp.abs());
    }
    worst
}
