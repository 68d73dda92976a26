//! Baseline ranking methods and a uniform dispatcher over all of them.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::concrete::{fit_dropout_rates, rank_from_rates, DropoutFit, FrConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::{AdamState, MlpModel, Mode, ParamBlock, Task};
use crate::ranking::{FeatureRanking, RankerKind};
use crate::seeds;

fn check_model(model: &MlpModel, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("ranking needs training samples".into()));
    }
    if model.input_dim() != data.n_features() {
        return Err(Error::Shape(format!(
            "data has {} features, model expects {}",
            data.n_features(),
            model.input_dim()
        )));
    }
    Ok(())
}

fn eval_loss(model: &MlpModel, x: &crate::Matrix, targets: &crate::Matrix) -> Result<f64> {
    Ok(model.task().loss(&model.forward_eval(x)?, targets)?.0)
}

/// Column mean computed as an offset from the first value, so a constant
/// column reproduces its value exactly.
fn stable_mean(values: &[f64]) -> f64 {
    let first = values[0];
    first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64
}

/// Loss increase when each feature is replaced by its training mean.
pub fn rank_mean(model: &MlpModel, train_set: &Dataset) -> Result<FeatureRanking> {
    check_model(model, train_set)?;
    let targets = train_set.targets();
    let baseline = eval_loss(model, &train_set.x, &targets)?;
    let scores = (0..train_set.n_features())
        .into_par_iter()
        .map(|j| {
            let mut x = train_set.x.clone();
            let m = stable_mean(&x.column(j));
            x.set_column(j, &vec![m; x.rows()]);
            Ok(eval_loss(model, &x, &targets)? - baseline)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureRanking::from_scores(RankerKind::Mean, scores, true)
}

/// Mean loss increase over `repeats` random permutations of each feature.
pub fn rank_shuffle(
    model: &MlpModel,
    train_set: &Dataset,
    repeats: usize,
    seed: u64,
) -> Result<FeatureRanking> {
    check_model(model, train_set)?;
    if repeats == 0 {
        return Err(Error::Config("shuffle needs at least one repeat".into()));
    }
    let targets = train_set.targets();
    let baseline = eval_loss(model, &train_set.x, &targets)?;
    let scores = (0..train_set.n_features())
        .into_par_iter()
        .map(|j| {
            let column = train_set.x.column(j);
            let mut total = 0.0;
            for r in 0..repeats {
                let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, &[j as u64, r as u64]));
                let mut perm = column.clone();
                perm.shuffle(&mut rng);
                let mut x = train_set.x.clone();
                x.set_column(j, &perm);
                total += eval_loss(model, &x, &targets)? - baseline;
            }
            Ok(total / repeats as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureRanking::from_scores(RankerKind::Shuffle, scores, true)
}

/// Two-sided Welch t-test p-value. Zero spread in both groups gives 1 for
/// equal means and 0 otherwise.
pub fn welch_p_value(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Domain(format!(
            "t-test needs at least 2 samples per class, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (n, m, var)
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return Ok(if ma == mb { 1.0 } else { 0.0 });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Domain(e.to_string()))?;
    Ok((2.0 * dist.sf(t.abs())).min(1.0))
}

/// Univariate ranking: Welch t-test p-value ascending for classification,
/// |Pearson r| descending for regression. Zero-variance features get the
/// no-evidence score (p = 1, |r| = 0).
pub fn rank_marginal(train_set: &Dataset, task: Task) -> Result<FeatureRanking> {
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("ranking needs training samples".into()));
    }
    let d = train_set.n_features();
    match task {
        Task::Regression => {
            let scores = (0..d)
                .map(|j| Ok(crate::eval::pearson(&train_set.x.column(j), &train_set.y)?.abs()))
                .collect::<Result<Vec<_>>>()?;
            FeatureRanking::from_scores(RankerKind::Marginal, scores, true)
        }
        Task::BinaryClassification => {
            let (pos, neg): (Vec<usize>, Vec<usize>) =
                (0..train_set.len()).partition(|&i| train_set.y[i] == 1.0);
            let scores = (0..d)
                .map(|j| {
                    let col = train_set.x.column(j);
                    let a: Vec<f64> = pos.iter().map(|&i| col[i]).collect();
                    let b: Vec<f64> = neg.iter().map(|&i| col[i]).collect();
                    welch_p_value(&a, &b)
                })
                .collect::<Result<Vec<_>>>()?;
            FeatureRanking::from_scores(RankerKind::Marginal, scores, false)
        }
    }
}

/// Uniform random permutation; a feature's score is `d − position`.
pub fn rank_random(d: usize, seed: u64) -> Result<FeatureRanking> {
    if d == 0 {
        return Err(Error::Config("cannot rank zero features".into()));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut scores = vec![0.0; d];
    for (pos, &f) in order.iter().enumerate() {
        scores[f] = (d - pos) as f64;
    }
    FeatureRanking::from_scores(RankerKind::Random, scores, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeepFsConfig {
    pub l1_lambda: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Train only the scaling layer; the model's parameters stay untouched.
    pub freeze_model: bool,
}

impl Default for DeepFsConfig {
    fn default() -> Self {
        Self {
            l1_lambda: 0.1,
            epochs: 200,
            learning_rate: 0.001,
            batch_size: 128,
            seed: 0,
            freeze_model: true,
        }
    }
}

impl DeepFsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l1_lambda >= 0.0 && self.l1_lambda.is_finite()) {
            return Err(Error::Config(format!("l1_lambda must be >= 0, got {}", self.l1_lambda)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepFsFit {
    pub weights: Vec<f64>,
    pub ranking: FeatureRanking,
    pub tuned_model: Option<MlpModel>,
}

/// Learns a per-feature input scale (initialized to 1) under an ℓ1 penalty
/// and ranks features by |scale|.
pub fn fit_deep_fs(model: &MlpModel, train_set: &Dataset, config: &DeepFsConfig) -> Result<DeepFsFit> {
    config.validate()?;
    check_model(model, train_set)?;
    let d = train_set.n_features();
    let mut weights = vec![1.0; d];
    let mut adam = AdamState::new(&[d]);
    let mut tuned = (!config.freeze_model).then(|| model.clone());
    let mut model_adam = AdamState::new(&model.param_layout().iter().map(|p| p.len).collect::<Vec<_>>());

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seeds::derive(config.seed, &[0]));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = train_set.subset(chunk);
            let mut scaled = batch.x.clone();
            for r in 0..scaled.rows() {
                for (v, w) in scaled.row_mut(r).iter_mut().zip(&weights) {
                    *v *= w;
                }
            }
            let net = tuned.as_ref().unwrap_or(model);
            let mode = if tuned.is_some() { Mode::Train } else { Mode::Eval };
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(
                config.seed,
                &[seeds::stream::NOISE, epoch as u64, b as u64],
            ));
            let (out, cache) = net.forward(&scaled, mode, &mut rng)?;
            let (loss, out_grad) = net.task().loss(&out, &batch.targets())?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b, value: loss });
            }
            let grads = net.backward(&cache, &out_grad)?;

            let mut wgrad = grads.input.hadamard(&batch.x)?.column_sums();
            for (g, w) in wgrad.iter_mut().zip(&weights) {
                if *w != 0.0 {
                    *g += config.l1_lambda * w.signum();
                }
            }
            if let Some(m) = tuned.as_mut() {
                m.absorb_batch_statistics(&cache);
                let mut blocks: Vec<ParamBlock<'_>> = m
                    .params_mut()
                    .into_iter()
                    .zip(&grads.params)
                    .map(|(values, grad)| ParamBlock { values, grad, decay: false })
                    .collect();
                model_adam.step(&mut blocks, config.learning_rate, 0.0)?;
            }
            adam.step(
                &mut [ParamBlock {
                    values: &mut weights,
                    grad: &wgrad,
                    decay: false,
                }],
                config.learning_rate,
                0.0,
            )?;
        }
    }
    let ranking = FeatureRanking::from_scores(
        RankerKind::DeepFs,
        weights.iter().map(|w| w.abs()).collect(),
        true,
    )?;
    Ok(DeepFsFit {
        weights,
        ranking,
        tuned_model: tuned,
    })
}

pub fn rank_deep_fs(model: &MlpModel, train_set: &Dataset, config: &DeepFsConfig) -> Result<FeatureRanking> {
    Ok(fit_deep_fs(model, train_set, config)?.ranking)
}

pub fn rank_dropout_fr(
    model: &MlpModel,
    train_set: &Dataset,
    config: &FrConfig,
) -> Result<(FeatureRanking, DropoutFit)> {
    let fit = fit_dropout_rates(model, train_set, config)?;
    Ok((rank_from_rates(&fit.keep_probs), fit))
}

/// Settings for every ranker, so callers can dispatch by [`RankerKind`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankerSettings {
    pub shuffle_repeats: usize,
    pub dropout_fr: FrConfig,
    pub deep_fs: DeepFsConfig,
}

impl Default for RankerSettings {
    fn default() -> Self {
        Self {
            shuffle_repeats: 1,
            dropout_fr: FrConfig::default(),
            deep_fs: DeepFsConfig::default(),
        }
    }
}

/// Runs one ranker. Stochastic rankers draw their seed from
/// `derive(seed, [stream])`, overriding any seed in `settings`.
pub fn run_ranker(
    kind: RankerKind,
    model: Option<&MlpModel>,
    train_set: &Dataset,
    task: Task,
    settings: &RankerSettings,
    seed: u64,
) -> Result<FeatureRanking> {
    let need = || {
        model.ok_or_else(|| Error::Config(format!("ranking method {kind} needs a trained model")))
    };
    match kind {
        RankerKind::Marginal => rank_marginal(train_set, task),
        RankerKind::Random => rank_random(
            train_set.n_features(),
            seeds::derive(seed, &[seeds::stream::RANDOM]),
        ),
        RankerKind::Mean => rank_mean(need()?, train_set),
        RankerKind::Shuffle => rank_shuffle(
            need()?,
            train_set,
            settings.shuffle_repeats,
            seeds::derive(seed, &[seeds::stream::SHUFFLE]),
        ),
        RankerKind::DeepFs => {
            let cfg = DeepFsConfig {
                seed: seeds::derive(seed, &[seeds::stream::DEEP_FS]),
                ..settings.deep_fs.clone()
            };
            rank_deep_fs(need()?, train_set, &cfg)
        }
        RankerKind::DropoutFr => {
            let cfg = FrConfig {
                seed: seeds::derive(seed, &[seeds::stream::DROPOUT_FR]),
                ..settings.dropout_fr.clone()
            };
            Ok(rank_dropout_fr(need()?, train_set, &cfg)?.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::nn::Architecture;
    use proptest::prelude::*;

    fn linear_data(n: usize) -> Dataset {
        // y = 3·x0 + x1; x2 constant
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let a = ((i * 7919) % 97) as f64 / 97.0 - 0.5;
            let b = ((i * 104_729) % 89) as f64 / 89.0 - 0.5;
            x.extend_from_slice(&[a, b, 2.0]);
            y.push(3.0 * a + b);
        }
        Dataset::new(Matrix::new(n, 3, x).unwrap(), y).unwrap()
    }

    fn small_model(seed: u64) -> MlpModel {
        let arch = Architecture {
            hidden: vec![6],
            dropout: 0.0,
            batch_norm: false,
        };
        MlpModel::with_architecture(Task::Regression, 3, &arch, seed).unwrap()
    }

    #[test]
    fn constant_column_scores_exactly_zero() {
        let data = linear_data(64);
        let model = small_model(2);
        assert_eq!(rank_mean(&model, &data).unwrap().scores[2], 0.0);
        assert_eq!(rank_shuffle(&model, &data, 3, 5).unwrap().scores[2], 0.0);
    }

    #[test]
    fn dead_input_scores_zero_under_mean_substitution() {
        let data = linear_data(64);
        let mut model = small_model(2);
        let dense = model.first_dense_mut().unwrap();
        for k in 0..dense.weights.cols() {
            dense.weights.set(0, k, 0.0);
        }
        let r = rank_mean(&model, &data).unwrap();
        assert!(r.scores[0].abs() < 1e-12);
        r.validate().unwrap();
    }

    #[test]
    fn marginal_regression_puts_the_target_copy_first() {
        let mut data = linear_data(50);
        let y = data.y.clone();
        data.x.set_column(1, &y);
        let r = rank_marginal(&data, Task::Regression).unwrap();
        assert_eq!(r.order[0], 1);
        assert!((r.scores[1] - 1.0).abs() < 1e-12);
        assert_eq!(r.scores[2], 0.0);
    }

    #[test]
    fn marginal_classification_prefers_separating_feature() {
        let n = 200;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = (i % 2) as f64;
            let noise = ((i * 31) % 17) as f64 / 17.0;
            x.extend_from_slice(&[noise, label * 2.0 + noise, 1.0]);
            y.push(label);
        }
        let data = Dataset::new(Matrix::new(n, 3, x).unwrap(), y).unwrap();
        let r = rank_marginal(&data, Task::BinaryClassification).unwrap();
        assert_eq!(r.order[0], 1);
        assert!(!r.higher_is_better);
        assert_eq!(r.scores[2], 1.0);

        let one = Dataset::new(Matrix::zeros(3, 1), vec![1.0, 0.0, 0.0]).unwrap();
        assert!(rank_marginal(&one, Task::BinaryClassification).is_err());
    }

    #[test]
    fn welch_matches_reference_value() {
        // scipy.stats.ttest_ind(a, b, equal_var=False).pvalue
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 6.0, 8.0, 10.0];
        let p = welch_p_value(&a, &b).unwrap();
        assert!((p - 0.069_133_593_192_392_36).abs() < 1e-10, "{p}");
    }

    #[test]
    fn random_ranker_basics() {
        assert_eq!(rank_random(1, 9).unwrap().order, vec![0]);
        assert_eq!(rank_random(30, 4).unwrap(), rank_random(30, 4).unwrap());
        assert!(rank_random(0, 1).is_err());
    }

    #[test]
    fn deep_fs_without_epochs_is_the_identity_order() {
        let data = linear_data(32);
        let cfg = DeepFsConfig {
            l1_lambda: 0.0,
            epochs: 0,
            ..DeepFsConfig::default()
        };
        let fit = fit_deep_fs(&small_model(1), &data, &cfg).unwrap();
        assert_eq!(fit.weights, vec![1.0; 3]);
        assert_eq!(fit.ranking.order, vec![0, 1, 2]);
    }

    #[test]
    fn deep_fs_huge_penalty_shrinks_every_weight() {
        let data = linear_data(64);
        let cfg = DeepFsConfig {
            l1_lambda: 1e4,
            epochs: 100,
            learning_rate: 0.05,
            batch_size: 64,
            ..DeepFsConfig::default()
        };
        let fit = fit_deep_fs(&small_model(1), &data, &cfg).unwrap();
        assert!(fit.weights.iter().all(|w| w.abs() < 0.1), "{:?}", fit.weights);
    }

    #[test]
    fn dispatch_requires_a_model_where_needed() {
        let data = linear_data(16);
        let s = RankerSettings::default();
        assert!(run_ranker(RankerKind::Mean, None, &data, Task::Regression, &s, 0).is_err());
        assert!(run_ranker(RankerKind::Random, None, &data, Task::Regression, &s, 0).is_ok());
    }

    proptest! {
        #[test]
        fn marginal_order_survives_affine_rescaling(scale in 0.01f64..100.0, shift in -50.0f64..50.0, col in 0usize..3) {
            let data = linear_data(40);
            let base = rank_marginal(&data, Task::Regression).unwrap();
            let mut moved = data.clone();
            let c: Vec<f64> = moved.x.column(col).iter().map(|v| v * scale + shift).collect();
            moved.x.set_column(col, &c);
            let r = rank_marginal(&moved, Task::Regression).unwrap();
            prop_assert_eq!(base.order, r.order);
        }

        #[test]
        fn every_stochastic_ranker_returns_a_valid_permutation(seed: u64, d in 1usize..50) {
            let r = rank_random(d, seed).unwrap();
            r.validate().unwrap();
            prop_assert_eq!(r, rank_random(d, seed).unwrap());
        }
    }
}
