//! Seeded dataset splitting: shuffle once, slice contiguously by fraction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Partition name -> fraction, in order (e.g. train/valid/test).
    pub fractions: Vec<(String, f64)>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(fractions: &[(&str, f64)], seed: u64) -> SplitSpec {
        SplitSpec {
            fractions: fractions
                .iter()
                .map(|(n, f)| (n.to_string(), *f))
                .collect(),
            seed,
        }
    }

    /// The default unlabeled split. The test partition is anchored at 5%.
    pub fn default_unlabeled(seed: u64) -> SplitSpec {
        Self::new(&[("train", 0.85), ("valid", 0.10), ("test", 0.05)], seed)
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.fractions.iter().map(|(_, f)| f).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::BadFractions(sum));
        }
        if self.fractions.iter().any(|(_, f)| *f < 0.0) {
            return Err(CorpusError::Invalid("negative split fraction".into()));
        }
        Ok(())
    }

    /// Partition sizes for `n` items: floor each, then hand out the remainder
    /// by largest fractional part (ties broken by partition order).
    pub fn sizes(&self, n: usize) -> Vec<usize> {
        let mut sizes: Vec<usize> = Vec::with_capacity(self.fractions.len());
        let mut fracs: Vec<(usize, f64)> = Vec::new();
        for (i, (_, f)) in self.fractions.iter().enumerate() {
            let exact = n as f64 * f;
            let floor = exact.floor() as usize;
            sizes.push(floor);
            fracs.push((i, exact - floor as f64));
        }
        let assigned: usize = sizes.iter().sum();
        let mut remainder = n - assigned;
        fracs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for (i, _) in fracs {
            if remainder == 0 {
                break;
            }
            sizes[i] += 1;
            remainder -= 1;
        }
        sizes
    }
}

/// Disjoint, exhaustive, seed-deterministic partitions.
pub fn split<T: Clone>(items: &[T], spec: &SplitSpec) -> Result<Vec<(String, Vec<T>)>> {
    spec.validate()?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);

    let sizes = spec.sizes(items.len());
    let mut out = Vec::with_capacity(spec.fractions.len());
    let mut offset = 0;
    for ((name, _), size) in spec.fractions.iter().zip(sizes) {
        let part: Vec<T> = order[offset..offset + size]
            .iter()
            .map(|&i| items[i].clone())
            .collect();
        out.push((name.clone(), part));
        offset += size;
    }
    Ok(out)
}
