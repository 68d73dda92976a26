//! The common output of every ranking method.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json};

pub const RANKING_FORMAT_VERSION: u32 = 1;

/// Every ranking method known to the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankerKind {
    DropoutFr,
    Mean,
    Shuffle,
    Marginal,
    Random,
    DeepFs,
}

impl RankerKind {
    pub const ALL: [RankerKind; 6] = [
        RankerKind::DropoutFr,
        RankerKind::Mean,
        RankerKind::Shuffle,
        RankerKind::Marginal,
        RankerKind::Random,
        RankerKind::DeepFs,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RankerKind::DropoutFr => "dropout_fr",
            RankerKind::Mean => "mean",
            RankerKind::Shuffle => "shuffle",
            RankerKind::Marginal => "marginal",
            RankerKind::Random => "random",
            RankerKind::DeepFs => "deep_fs",
        }
    }

    /// Methods that need a trained model to score features.
    pub fn needs_model(&self) -> bool {
        !matches!(self, RankerKind::Marginal | RankerKind::Random)
    }
}

impl std::fmt::Display for RankerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RankerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RankerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Unknown {
                what: "ranking method",
                name: s.to_string(),
            })
    }
}

/// Features ordered best first, with the per-feature scores that produced
/// the order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub method: RankerKind,
    pub order: Vec<usize>,
    pub scores: Vec<f64>,
    pub higher_is_better: bool,
}

impl FeatureRanking {
    /// Sorts features by score in the declared direction; equal scores keep
    /// the lower feature index first.
    pub fn from_scores(method: RankerKind, scores: Vec<f64>, higher_is_better: bool) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Domain(format!("{method}: non-finite feature score")));
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            let ord = scores[a].partial_cmp(&scores[b]).expect("finite scores");
            let ord = if higher_is_better { ord.reverse() } else { ord };
            ord.then(a.cmp(&b))
        });
        Ok(Self {
            method,
            order,
            scores,
            higher_is_better,
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// The first `n` features of the ranking.
    pub fn top(&self, n: usize) -> &[usize] {
        &self.order[..n.min(self.order.len())]
    }

    /// 0-based position of every feature in the ranking.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (p, &f) in self.order.iter().enumerate() {
            pos[f] = p;
        }
        pos
    }

    /// Checks the permutation and score-consistency invariants.
    pub fn validate(&self) -> Result<()> {
        let d = self.scores.len();
        if self.order.len() != d {
            return Err(Error::Shape(format!(
                "order has {} entries for {d} scores",
                self.order.len()
            )));
        }
        let mut seen = vec![false; d];
        for &f in &self.order {
            if f >= d || seen[f] {
                return Err(Error::Domain(format!("order is not a permutation (feature {f})")));
            }
            seen[f] = true;
        }
        for w in self.order.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (sa, sb) = (self.scores[a], self.scores[b]);
            let ok = if sa == sb {
                a < b
            } else if self.higher_is_better {
                sa > sb
            } else {
                sa < sb
            };
            if !ok {
                return Err(Error::Domain(format!(
                    "features {a} and {b} are out of order for their scores"
                )));
            }
        }
        Ok(())
    }
}

/// On-disk ranking: method, feature names, order, scores and the method's
/// configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingFile {
    pub format_version: u32,
    pub method: RankerKind,
    pub feature_names: Vec<String>,
    pub order: Vec<usize>,
    pub scores: Vec<f64>,
    pub higher_is_better: bool,
    pub config: serde_json::Value,
}

impl RankingFile {
    pub fn new(ranking: &FeatureRanking, feature_names: Vec<String>, config: serde_json::Value) -> Self {
        Self {
            format_version: RANKING_FORMAT_VERSION,
            method: ranking.method,
            feature_names,
            order: ranking.order.clone(),
            scores: ranking.scores.clone(),
            higher_is_better: ranking.higher_is_better,
            config,
        }
    }

    pub fn ranking(&self) -> Result<FeatureRanking> {
        if self.format_version != RANKING_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: self.format_version,
                expected: RANKING_FORMAT_VERSION,
            });
        }
        let r = FeatureRanking {
            method: self.method,
            order: self.order.clone(),
            scores: self.scores.clone(),
            higher_is_better: self.higher_is_better,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}
