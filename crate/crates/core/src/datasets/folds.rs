use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

/// Index sets for one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// K-fold split of `0..n`. Test folds partition the indices; each fold's
/// validation set is `val_fraction` of its training portion.
pub fn kfold_split(n: usize, k: usize, val_fraction: f64, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::Config(format!("{n} samples cannot fill {k} folds")));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Config(format!("val_fraction {val_fraction} outside [0, 1)")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        let end = start + size;
        let mut test = perm[start..end].to_vec();
        let mut rest: Vec<usize> = perm[..start].iter().chain(&perm[end..]).copied().collect();
        rest.shuffle(&mut ChaCha8Rng::seed_from_u64(seeds::derive(seed, &[f as u64])));
        let n_val = ((rest.len() as f64) * val_fraction).round() as usize;
        let mut val = rest[..n_val].to_vec();
        let mut train = rest[n_val..].to_vec();
        test.sort_unstable();
        val.sort_unstable();
        train.sort_unstable();
        folds.push(Fold { train, val, test });
        start = end;
    }
    Ok(FoldPlan {
        k,
        val_fraction,
        seed,
        folds,
    })
}

/// Single train/validation split of `0..n`.
pub fn train_val_split(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Config(format!("val_fraction {val_fraction} outside [0, 1)")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64) * val_fraction).round() as usize;
    let mut val = perm[..n_val].to_vec();
    let mut train = perm[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}
