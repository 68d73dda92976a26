//! Ranking quality against ground truth and the zero-out / retrain
//! performance curves.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::nn::{train, Architecture, MlpModel, Task, TrainConfig};
use crate::ranking::FeatureRanking;
use crate::seeds;

/// Ranks with 1 = smallest value; tied values share their average rank.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} vs {} values", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::Domain("correlation needs at least 2 values".into()));
    }
    let n = a.len() as f64;
    // offset from the first value keeps a constant side exactly constant
    let ma = a[0] + a.iter().map(|v| v - a[0]).sum::<f64>() / n;
    let mb = b[0] + b.iter().map(|v| v - b[0]).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman correlation of two score vectors (same direction).
pub fn spearman_vectors(a: &[f64], b: &[f64]) -> Result<f64> {
    pearson(&fractional_ranks(a), &fractional_ranks(b))
}

pub const TIE_CONVENTION: &str =
    "top-k by ground truth (lower index at the boundary); both sides re-ranked within the subset, ties averaged";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub coefficient: f64,
    pub top_k: usize,
    pub tie_convention: String,
}

/// Spearman correlation between a ranking and ground-truth fractional
/// ranks (1 = most important), restricted to the `top_k` truly most
/// important features.
pub fn spearman(
    predicted: &FeatureRanking,
    truth_ranks: &[f64],
    top_k: usize,
) -> Result<SpearmanResult> {
    let d = predicted.len();
    if truth_ranks.len() != d {
        return Err(Error::Shape(format!(
            "ranking covers {d} features, ground truth {}",
            truth_ranks.len()
        )));
    }
    if top_k < 2 || top_k > d {
        return Err(Error::Domain(format!("top_k must be in [2, {d}], got {top_k}")));
    }
    if truth_ranks.iter().any(|r| !r.is_finite()) {
        return Err(Error::Domain("ground-truth ranks must be finite".into()));
    }
    let mut by_truth: Vec<usize> = (0..d).collect();
    by_truth.sort_by(|&a, &b| truth_ranks[a].total_cmp(&truth_ranks[b]).then(a.cmp(&b)));
    let subset = &by_truth[..top_k];

    // smaller key = more important on both sides
    let sign = if predicted.higher_is_better { -1.0 } else { 1.0 };
    let pred_keys: Vec<f64> = subset.iter().map(|&j| sign * predicted.scores[j]).collect();
    let truth_keys: Vec<f64> = subset.iter().map(|&j| truth_ranks[j]).collect();
    Ok(SpearmanResult {
        coefficient: spearman_vectors(&pred_keys, &truth_keys)?,
        top_k,
        tie_convention: TIE_CONVENTION.to_string(),
    })
}

pub fn metric_mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// Fraction correct; a probability of at least 0.5 predicts class 1.
pub fn metric_accuracy(pred_probs: &[f64], labels: &[f64]) -> Result<f64> {
    check_pair(pred_probs, labels)?;
    let correct = pred_probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= 0.5) == (y == 1.0))
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} predictions for {} targets", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::EmptyDataset("no predictions to score".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Mse,
    Accuracy,
}

impl MetricKind {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Regression => MetricKind::Mse,
            Task::BinaryClassification => MetricKind::Accuracy,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Mse => "mse",
            MetricKind::Accuracy => "accuracy",
        }
    }
}

/// Test metric of `model` on `data` (eval mode).
pub fn evaluate_model(model: &MlpModel, data: &Dataset) -> Result<f64> {
    let pred = model.predict(&data.x)?;
    match MetricKind::for_task(model.task()) {
        MetricKind::Mse => metric_mse(pred.as_slice(), &data.y),
        MetricKind::Accuracy => metric_accuracy(pred.as_slice(), &data.y),
    }
}

/// Population mean and standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    ZeroOut,
    Retrain,
}

impl EvalMode {
    pub fn name(&self) -> &'static str {
        match self {
            EvalMode::ZeroOut => "zero_out",
            EvalMode::Retrain => "retrain",
        }
    }
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero_out" | "zero-out" => Ok(EvalMode::ZeroOut),
            "retrain" => Ok(EvalMode::Retrain),
            other => Err(Error::Unknown {
                what: "evaluation mode",
                name: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n_features: usize,
    /// One value per fold.
    pub values: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

impl CurvePoint {
    fn new(n_features: usize, values: Vec<f64>) -> Self {
        let (mean, sd) = mean_sd(&values);
        Self {
            n_features,
            values,
            mean,
            sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCurve {
    pub method: String,
    pub mode: EvalMode,
    pub metric: MetricKind,
    pub points: Vec<CurvePoint>,
}

impl EvalCurve {
    /// Builds a curve from `values[point][fold]`.
    pub fn new(
        method: &str,
        mode: EvalMode,
        metric: MetricKind,
        n_list: &[usize],
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_n_list(n_list, usize::MAX)?;
        if values.len() != n_list.len() {
            return Err(Error::Shape(format!(
                "{} value rows for {} points",
                values.len(),
                n_list.len()
            )));
        }
        let folds = values.first().map_or(0, Vec::len);
        if values.iter().any(|v| v.len() != folds) {
            return Err(Error::Shape("every point needs the same number of folds".into()));
        }
        Ok(Self {
            method: method.to_string(),
            mode,
            metric,
            points: n_list
                .iter()
                .zip(values)
                .map(|(&n, v)| CurvePoint::new(n, v))
                .collect(),
        })
    }

    pub fn n_folds(&self) -> usize {
        self.points.first().map_or(0, |p| p.values.len())
    }

    /// Concatenates single-fold curves (same method, mode and points).
    pub fn merge_folds(curves: &[EvalCurve]) -> Result<Self> {
        let first = curves
            .first()
            .ok_or_else(|| Error::EmptyDataset("no curves to merge".into()))?;
        let n_list: Vec<usize> = first.points.iter().map(|p| p.n_features).collect();
        let mut values = vec![Vec::new(); n_list.len()];
        for c in curves {
            let same = c.method == first.method
                && c.mode == first.mode
                && c.metric == first.metric
                && c.points.iter().map(|p| p.n_features).eq(n_list.iter().copied());
            if !same {
                return Err(Error::Shape("curves disagree on method or points".into()));
            }
            for (acc, p) in values.iter_mut().zip(&c.points) {
                acc.extend_from_slice(&p.values);
            }
        }
        Self::new(&first.method, first.mode, first.metric, &n_list, values)
    }
}

fn check_n_list(n_list: &[usize], d: usize) -> Result<()> {
    if n_list.is_empty() {
        return Err(Error::Config("n_list is empty".into()));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("n_list must be strictly increasing: {n_list:?}")));
    }
    if let Some(&n) = n_list.iter().find(|&&n| n > d) {
        return Err(Error::Config(format!("cannot keep {n} of {d} features")));
    }
    Ok(())
}

/// Parses "1,2,5,10".
pub fn parse_n_list(s: &str) -> Result<Vec<usize>> {
    let list = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("'{t}' in n_list is not a count")))
        })
        .collect::<Result<Vec<_>>>()?;
    check_n_list(&list, usize::MAX)?;
    Ok(list)
}

/// Copy of `data` with every feature outside the ranking's top `n` set to 0.
pub fn zero_out(data: &Dataset, ranking: &FeatureRanking, n: usize) -> Result<Dataset> {
    if ranking.len() != data.n_features() {
        return Err(Error::Shape(format!(
            "ranking covers {} features, data has {}",
            ranking.len(),
            data.n_features()
        )));
    }
    if n > ranking.len() {
        return Err(Error::Config(format!("cannot keep {n} of {} features", ranking.len())));
    }
    let mut out = data.clone();
    for &j in &ranking.order[n..] {
        for r in 0..out.len() {
            out.x.set(r, j, 0.0);
        }
    }
    Ok(out)
}

/// Test metric of the already-trained `model` with all but the top-N
/// features zeroed. Zero equals the training mean only on standardized
/// inputs.
pub fn zero_out_eval(
    model: &MlpModel,
    ranking: &FeatureRanking,
    test: &Dataset,
    n_list: &[usize],
    method: &str,
) -> Result<EvalCurve> {
    check_n_list(n_list, ranking.len())?;
    let values = n_list
        .iter()
        .map(|&n| Ok(vec![evaluate_model(model, &zero_out(test, ranking, n)?)?]))
        .collect::<Result<Vec<_>>>()?;
    EvalCurve::new(
        method,
        EvalMode::ZeroOut,
        MetricKind::for_task(model.task()),
        n_list,
        values,
    )
}

/// Preprocessed train/validation/test sets of one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// What a fresh model in a retrain cell looks like.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrainSpec<'a> {
    pub task: Task,
    pub architecture: &'a Architecture,
    pub train_config: &'a TrainConfig,
    pub seed: u64,
}

/// Test metric of a fresh model trained on the `n` top-ranked columns.
pub fn retrain_cell(
    ranking: &FeatureRanking,
    fold: &FoldData,
    n: usize,
    fold_index: usize,
    spec: &RetrainSpec<'_>,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Config("retraining needs at least one feature".into()));
    }
    let cols = ranking.top(n);
    let cell = [fold_index as u64, n as u64];
    let init_seed = seeds::derive(spec.seed, &[seeds::stream::RETRAIN, cell[0], cell[1], 0]);
    let mut cfg = spec.train_config.clone();
    cfg.seed = seeds::derive(spec.seed, &[seeds::stream::RETRAIN, cell[0], cell[1], 1]);
    let model = MlpModel::with_architecture(spec.task, n, spec.architecture, init_seed)?;
    let (model, _) = train(
        model,
        &fold.train.select_features(cols),
        &fold.val.select_features(cols),
        &cfg,
    )?;
    evaluate_model(&model, &fold.test.select_features(cols))
}

/// Retrain curve over all folds. `rankings` holds one ranking per fold, or
/// a single ranking shared by every fold. Cells run in parallel on the
/// current rayon pool; each has its own derived seed.
pub fn retrain_eval(
    rankings: &[FeatureRanking],
    folds: &[FoldData],
    spec: &RetrainSpec<'_>,
    n_list: &[usize],
    method: &str,
) -> Result<EvalCurve> {
    if rankings.len() != 1 && rankings.len() != folds.len() {
        return Err(Error::Shape(format!(
            "{} rankings for {} folds",
            rankings.len(),
            folds.len()
        )));
    }
    let d = rankings[0].len();
    check_n_list(n_list, d)?;
    let cells: Vec<(usize, usize)> = (0..n_list.len())
        .flat_map(|p| (0..folds.len()).map(move |f| (p, f)))
        .collect();
    let results: Vec<f64> = cells
        .par_iter()
        .map(|&(p, f)| {
            let ranking = &rankings[if rankings.len() == 1 { 0 } else { f }];
            retrain_cell(ranking, &folds[f], n_list[p], f, spec)
        })
        .collect::<Result<Vec<_>>>()?;
    let values = results.chunks(folds.len()).map(<[f64]>::to_vec).collect();
    EvalCurve::new(
        method,
        EvalMode::Retrain,
        MetricKind::for_task(spec.task),
        n_list,
        values,
    )
}

/// `method,mode,n_features,fold,metric` rows, one per fold and point.
pub fn curves_csv(curves: &[EvalCurve]) -> String {
    let mut s = String::from("method,mode,n_features,fold,metric\n");
    for c in curves {
        for p in &c.points {
            for (f, v) in p.values.iter().enumerate() {
                s.push_str(&format!("{},{},{},{},{}\n", c.method, c.mode.name(), p.n_features, f, v));
            }
        }
    }
    s
}

pub fn write_curves_csv(path: &Path, curves: &[EvalCurve]) -> Result<()> {
    write_atomic(path, curves_csv(curves).as_bytes())
}
