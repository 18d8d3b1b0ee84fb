use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fractions for train / validation / test / holdout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub holdout: f64,
}

impl SplitFractions {
    pub fn new(train: f64, validation: f64, test: f64, holdout: f64) -> Self {
        SplitFractions {
            train,
            validation,
            test,
            holdout,
        }
    }

    fn as_array(&self) -> [f64; 4] {
        [self.train, self.validation, self.test, self.holdout]
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions::new(0.8, 0.1, 0.1, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub holdout: Vec<String>,
}

impl CorpusSplit {
    pub fn sizes(&self) -> (usize, usize, usize, usize) {
        (
            self.train.len(),
            self.validation.len(),
            self.test.len(),
            self.holdout.len(),
        )
    }
}

/// Largest-remainder apportionment; every part is within one of its quota.
fn apportion(n: usize, fractions: [f64; 4]) -> [usize; 4] {
    let quotas = fractions.map(|f| f * n as f64);
    let mut sizes = quotas.map(|q| q.floor() as usize);
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..4).collect();
    // stable: ties go to the earlier part
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Seeded random partition of `ids`.
pub fn split_corpus(ids: &[String], seed: u64, fractions: SplitFractions) -> Result<CorpusSplit> {
    let f = fractions.as_array();
    if f.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::config("split fractions must be non-negative"));
    }
    let sum: f64 = f.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split fractions sum to {sum}, expected 1")));
    }
    let mut shuffled = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let sizes = apportion(ids.len(), f);
    let mut it = shuffled.into_iter();
    let mut take = |n: usize| it.by_ref().take(n).collect::<Vec<_>>();
    Ok(CorpusSplit {
        train: take(sizes[0]),
        validation: take(sizes[1]),
        test: take(sizes[2]),
        holdout: take(sizes[3]),
    })
}
