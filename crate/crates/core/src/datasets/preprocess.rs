//! Outlier clipping, standardization and one-hot encoding. Every statistic
//! is fitted on training rows only and then applied to all rows.

use serde::{Deserialize, Serialize};

use super::table::{Column, RawTable};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetHandling {
    None,
    Normalize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSpec {
    pub clip_outliers: bool,
    pub iqr_multiplier: f64,
    pub standardize: bool,
    pub target: TargetHandling,
}

impl Default for PreprocessSpec {
    fn default() -> Self {
        Self {
            clip_outliers: true,
            iqr_multiplier: 1.5,
            standardize: true,
            target: TargetHandling::None,
        }
    }
}

impl PreprocessSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.iqr_multiplier > 0.0 && self.iqr_multiplier.is_finite()) {
            return Err(Error::Config(format!(
                "iqr_multiplier must be positive, got {}",
                self.iqr_multiplier
            )));
        }
        Ok(())
    }
}

/// Linear-interpolation quantile of sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `[Q1 − m·IQR, Q3 + m·IQR]` of `values`.
pub fn iqr_bounds(values: &[f64], multiplier: f64) -> Result<(f64, f64)> {
    if values.len() < 4 {
        return Err(Error::Domain(format!(
            "IQR clipping needs at least 4 values, got {}",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok((q1 - multiplier * iqr, q3 + multiplier * iqr))
}

pub fn iqr_clip(column: &[f64], multiplier: f64) -> Result<Vec<f64>> {
    let (lo, hi) = iqr_bounds(column, multiplier)?;
    Ok(column.iter().map(|v| v.clamp(lo, hi)).collect())
}

/// Column mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub sd: f64,
}

impl Standardizer {
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            sd: var.sqrt(),
        }
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        if self.sd > 0.0 {
            (v - self.mean) / self.sd
        } else {
            0.0
        }
    }

    #[inline]
    pub fn invert(&self, v: f64) -> f64 {
        v * self.sd + self.mean
    }
}

/// Standardizes `apply_columns` with statistics from `train_columns`.
pub fn standardize(
    train_columns: &[Vec<f64>],
    apply_columns: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<Standardizer>)> {
    if train_columns.len() != apply_columns.len() {
        return Err(Error::Shape("column counts differ".into()));
    }
    let stats: Vec<Standardizer> = train_columns.iter().map(|c| Standardizer::fit(c)).collect();
    let out = apply_columns
        .iter()
        .zip(&stats)
        .map(|(c, s)| c.iter().map(|&v| s.apply(v)).collect())
        .collect();
    Ok((out, stats))
}

/// Categories seen in training, in sorted order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHotEncoder {
    pub categories: Vec<String>,
}

impl OneHotEncoder {
    pub fn fit(values: &[String]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDataset("one-hot encoding of an empty column".into()));
        }
        let mut categories = values.to_vec();
        categories.sort();
        categories.dedup();
        Ok(Self { categories })
    }

    /// One binary column per category; unseen values encode as all zeros.
    pub fn transform(&self, values: &[String]) -> Vec<Vec<f64>> {
        let mut cols = vec![vec![0.0; values.len()]; self.categories.len()];
        for (r, v) in values.iter().enumerate() {
            if let Ok(c) = self.categories.binary_search(v) {
                cols[c][r] = 1.0;
            }
        }
        cols
    }
}

pub fn one_hot(values: &[String]) -> Result<(Vec<Vec<f64>>, OneHotEncoder)> {
    let enc = OneHotEncoder::fit(values)?;
    Ok((enc.transform(values), enc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnTransform {
    Numeric {
        clip: Option<(f64, f64)>,
        scale: Option<Standardizer>,
    },
    OneHot(OneHotEncoder),
}

/// Preprocessing statistics fitted on a training subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPreprocessor {
    pub columns: Vec<ColumnTransform>,
    pub target: Option<Standardizer>,
    pub feature_names: Vec<String>,
}

impl FittedPreprocessor {
    pub fn fit(table: &RawTable, train_rows: &[usize], spec: &PreprocessSpec) -> Result<Self> {
        spec.validate()?;
        if train_rows.is_empty() {
            return Err(Error::EmptyDataset("no training rows to fit preprocessing".into()));
        }
        let mut columns = Vec::with_capacity(table.columns.len());
        let mut feature_names = Vec::new();
        for (name, col) in table.names.iter().zip(&table.columns) {
            match col {
                Column::Numeric(values) => {
                    let train: Vec<f64> = train_rows.iter().map(|&r| values[r]).collect();
                    let clip = if spec.clip_outliers && train.len() >= 4 {
                        Some(iqr_bounds(&train, spec.iqr_multiplier)?)
                    } else {
                        None
                    };
                    let clipped: Vec<f64> = match clip {
                        Some((lo, hi)) => train.iter().map(|v| v.clamp(lo, hi)).collect(),
                        None => train,
                    };
                    let scale = spec.standardize.then(|| Standardizer::fit(&clipped));
                    feature_names.push(name.clone());
                    columns.push(ColumnTransform::Numeric { clip, scale });
                }
                Column::Categorical(values) => {
                    let train: Vec<String> = train_rows.iter().map(|&r| values[r].clone()).collect();
                    let enc = OneHotEncoder::fit(&train)?;
                    feature_names.extend(enc.categories.iter().map(|c| format!("{name}={c}")));
                    columns.push(ColumnTransform::OneHot(enc));
                }
            }
        }
        let target = match (spec.target, table.task) {
            (TargetHandling::Normalize, crate::nn::Task::Regression) => {
                let t: Vec<f64> = train_rows.iter().map(|&r| table.target[r]).collect();
                Some(Standardizer::fit(&t))
            }
            _ => None,
        };
        Ok(Self {
            columns,
            target,
            feature_names,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn transform(&self, table: &RawTable, rows: &[usize]) -> Result<Dataset> {
        if table.columns.len() != self.columns.len() {
            return Err(Error::Shape("table does not match fitted preprocessing".into()));
        }
        let mut out_cols: Vec<Vec<f64>> = Vec::with_capacity(self.n_features());
        for (col, tr) in table.columns.iter().zip(&self.columns) {
            match (col, tr) {
                (Column::Numeric(values), ColumnTransform::Numeric { clip, scale }) => {
                    out_cols.push(
                        rows.iter()
                            .map(|&r| {
                                let mut v = values[r];
                                if let Some((lo, hi)) = clip {
                                    v = v.clamp(*lo, *hi);
                                }
                                scale.map_or(v, |s| s.apply(v))
                            })
                            .collect(),
                    );
                }
                (Column::Categorical(values), ColumnTransform::OneHot(enc)) => {
                    let subset: Vec<String> = rows.iter().map(|&r| values[r].clone()).collect();
                    out_cols.extend(enc.transform(&subset));
                }
                _ => return Err(Error::Schema("column type changed since fitting".into())),
            }
        }
        let d = out_cols.len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for i in 0..rows.len() {
            data.extend(out_cols.iter().map(|c| c[i]));
        }
        let y = rows
            .iter()
            .map(|&r| {
                let t = table.target[r];
                self.target.map_or(t, |s| s.apply(t))
            })
            .collect();
        Dataset::new(Matrix::new(rows.len(), d, data)?, y)
    }
}
