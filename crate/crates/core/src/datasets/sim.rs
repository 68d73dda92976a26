//! Simulated regression sets with known feature importance.
//!
//! Both sets have 40 standard-normal features of which only the first 20
//! carry signal. Informative term `d` (1-indexed) is kept per sample with
//! probability `1 − 0.05·(d − 1)`, so importance decreases with `d`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::matrix::Matrix;

pub const SIM_FEATURES: usize = 40;
pub const SIM_INFORMATIVE: usize = 20;
pub const GROUND_TRUTH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimKind {
    NoInteraction,
    Interaction,
}

impl SimKind {
    pub fn name(&self) -> &'static str {
        match self {
            SimKind::NoInteraction => "no_interaction",
            SimKind::Interaction => "interaction",
        }
    }

    /// Fractional ground-truth ranks (1 = most important), ties averaged.
    pub fn ground_truth_ranks(&self) -> Vec<f64> {
        let noise_rank = (SIM_INFORMATIVE + 1 + SIM_FEATURES) as f64 / 2.0;
        (1..=SIM_FEATURES)
            .map(|d| {
                if d > SIM_INFORMATIVE {
                    noise_rank
                } else {
                    match self {
                        SimKind::NoInteraction => d as f64,
                        SimKind::Interaction => {
                            let k = (d + 1) / 2;
                            (4 * k - 1) as f64 / 2.0
                        }
                    }
                }
            })
            .collect()
    }

    /// Var(y) implied by the generator.
    pub fn target_variance(&self) -> f64 {
        match self {
            SimKind::NoInteraction => (1..=SIM_INFORMATIVE).map(keep_prob).sum(),
            SimKind::Interaction => (1..=SIM_INFORMATIVE).step_by(2).map(keep_prob).sum(),
        }
    }
}

impl std::str::FromStr for SimKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no_interaction" => Ok(SimKind::NoInteraction),
            "interaction" => Ok(SimKind::Interaction),
            other => Err(Error::Unknown {
                what: "simulation kind",
                name: other.to_string(),
            }),
        }
    }
}

impl std::fmt::Display for SimKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Keep probability of informative term `d` (1-indexed).
pub fn keep_prob(d: usize) -> f64 {
    1.0 - 0.05 * (d - 1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub kind: SimKind,
    pub seed: u64,
    pub data: Dataset,
    pub ground_truth_ranks: Vec<f64>,
}

impl SimDataset {
    pub fn feature_names(&self) -> Vec<String> {
        sim_feature_names()
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            format_version: GROUND_TRUTH_FORMAT_VERSION,
            kind: self.kind,
            seed: self.seed,
            n: self.data.len(),
            ranks: self.ground_truth_ranks.clone(),
        }
    }
}

pub fn sim_feature_names() -> Vec<String> {
    (1..=SIM_FEATURES).map(|d| format!("x{d}")).collect()
}

/// Ground-truth sidecar written next to simulated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub format_version: u32,
    pub kind: SimKind,
    pub seed: u64,
    pub n: usize,
    pub ranks: Vec<f64>,
}

impl GroundTruth {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let gt: Self = read_json(path)?;
        if gt.format_version != GROUND_TRUTH_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: gt.format_version,
                expected: GROUND_TRUTH_FORMAT_VERSION,
            });
        }
        Ok(gt)
    }
}

fn generate(kind: SimKind, n: usize, seed: u64) -> Result<SimDataset> {
    if n == 0 {
        return Err(Error::Config("simulation needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * SIM_FEATURES);
    let mut y = Vec::with_capacity(n);
    let mut row = [0.0f64; SIM_FEATURES];
    for _ in 0..n {
        for v in row.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut target = 0.0;
        for d in 1..=SIM_INFORMATIVE {
            let kept = rng.gen::<f64>() < keep_prob(d);
            if !kept {
                continue;
            }
            match kind {
                SimKind::NoInteraction => target += row[d - 1],
                SimKind::Interaction if d % 2 == 1 => target += row[d - 1] * row[d],
                SimKind::Interaction => {}
            }
        }
        x.extend_from_slice(&row);
        y.push(target);
    }
    Ok(SimDataset {
        kind,
        seed,
        data: Dataset::new(Matrix::new(n, SIM_FEATURES, x)?, y)?,
        ground_truth_ranks: kind.ground_truth_ranks(),
    })
}

/// `y = Σ_{d=1}^{20} x_d·z_d`.
pub fn gen_no_interaction(n: usize, seed: u64) -> Result<SimDataset> {
    generate(SimKind::NoInteraction, n, seed)
}

/// `y = Σ_{d odd, d ≤ 19} x_d·x_{d+1}·z_d`.
pub fn gen_interaction(n: usize, seed: u64) -> Result<SimDataset> {
    generate(SimKind::Interaction, n, seed)
}

pub fn generate_sim(kind: SimKind, n: usize, seed: u64) -> Result<SimDataset> {
    generate(kind, n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keep_probabilities_at_the_ends() {
        assert_eq!(keep_prob(1), 1.0);
        assert!((keep_prob(20) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn ground_truth_tie_structure() {
        let r = SimKind::NoInteraction.ground_truth_ranks();
        for d in 1..=20 {
            assert_eq!(r[d - 1], d as f64);
        }
        assert!(r[20..].iter().all(|&v| v == 30.5));

        let r = SimKind::Interaction.ground_truth_ranks();
        for k in 1..=10 {
            let want = (2 * k - 1 + 2 * k) as f64 / 2.0;
            assert_eq!(r[2 * k - 2], want);
            assert_eq!(r[2 * k - 1], want);
        }
        assert!(r[20..].iter().all(|&v| v == 30.5));
        // fractional ranks of 40 items sum to 40·41/2
        assert_eq!(r.iter().sum::<f64>(), 820.0);
    }

    #[test]
    fn analytic_variances() {
        assert!((SimKind::NoInteraction.target_variance() - 10.5).abs() < 1e-12);
        // 1 + 0.9 + ... + 0.1
        assert!((SimKind::Interaction.target_variance() - 5.5).abs() < 1e-12);
    }

    #[test]
    fn generator_is_deterministic() {
        let a = gen_interaction(50, 3).unwrap();
        let b = gen_interaction(50, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.data, gen_interaction(50, 4).unwrap().data);
        assert!(gen_no_interaction(0, 1).is_err());
    }
}
