//! Learned per-feature dropout on the input layer of a trained model.
//!
//! Each input feature `j` gets a keep probability `θ_j = sigmoid(α_j)`.
//! Hard Bernoulli masks are replaced by their concrete relaxation
//!
//! ```text
//! z̃ = sigmoid((α + ln u − ln(1 − u)) / t),   u ~ Uniform(0, 1)
//! ```
//!
//! so the objective
//!
//! ```text
//! L(α) = mean_i loss(y_i, f(x_i ⊙ z̃_i)) + λ · mean_i Σ_j z̃_ij
//! ```
//!
//! is differentiable in the logits. Important features end up with high
//! keep probabilities; features are ranked by `θ` descending.

use rand::distributions::Open01;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{sigmoid, AdamState, MlpModel, Mode, ParamBlock};
use crate::ranking::{FeatureRanking, RankerKind};
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrConfig {
    pub lambda: f64,
    pub temperature: f64,
    /// Epochs over which λ ramps linearly up from 0.
    pub anneal_epochs: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Train only the dropout logits; the model's parameters stay untouched.
    pub freeze_model: bool,
}

impl Default for FrConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            temperature: 0.1,
            anneal_epochs: 30,
            epochs: 200,
            learning_rate: 0.001,
            batch_size: 128,
            seed: 0,
            freeze_model: true,
        }
    }
}

impl FrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.anneal_epochs > self.epochs {
            return Err(Error::Config(format!(
                "anneal_epochs ({}) exceeds epochs ({})",
                self.anneal_epochs, self.epochs
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-feature keep probabilities, each strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct KeepProbVector(Vec<f64>);

impl KeepProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((j, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && **v < 1.0))
        {
            return Err(Error::Domain(format!(
                "keep probability {v} for feature {j} is outside (0, 1)"
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len().max(1) as f64
    }
}

impl TryFrom<Vec<f64>> for KeepProbVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<KeepProbVector> for Vec<f64> {
    fn from(v: KeepProbVector) -> Self {
        v.0
    }
}

/// Dropout logits `α_j` for every input feature; starts at `θ = 0.5`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDropoutLayer {
    logits: Vec<f64>,
}

impl FeatureDropoutLayer {
    pub fn new(n_features: usize) -> Self {
        Self {
            logits: vec![0.0; n_features],
        }
    }

    pub fn from_logits(logits: Vec<f64>) -> Self {
        Self { logits }
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn n_features(&self) -> usize {
        self.logits.len()
    }

    pub fn keep_probs(&self) -> KeepProbVector {
        // sigmoid rounds to exactly 0 or 1 for |α| beyond ~37 (or ~745)
        let below_one = 1.0 - f64::EPSILON / 2.0;
        KeepProbVector(
            self.logits
                .iter()
                .map(|&a| sigmoid(a).clamp(f64::MIN_POSITIVE, below_one))
                .collect(),
        )
    }
}

/// `λ · min(1, epoch / anneal_epochs)`.
pub fn anneal_lambda(epoch: usize, config: &FrConfig) -> f64 {
    if config.anneal_epochs == 0 || epoch >= config.anneal_epochs {
        config.lambda
    } else {
        config.lambda * epoch as f64 / config.anneal_epochs as f64
    }
}

#[inline]
fn relaxed(logit: f64, u: f64, inv_t: f64) -> f64 {
    sigmoid((logit + u.ln() - (-u).ln_1p()) * inv_t)
}

fn check_noise(logits: &[f64], noise_u: &Matrix, temperature: f64) -> Result<()> {
    if noise_u.cols() != logits.len() {
        return Err(Error::Shape(format!(
            "noise has {} columns for {} logits",
            noise_u.cols(),
            logits.len()
        )));
    }
    if !(temperature > 0.0) {
        return Err(Error::Domain(format!("temperature must be positive, got {temperature}")));
    }
    if let Some(pos) = noise_u.as_slice().iter().position(|&u| !(u > 0.0 && u < 1.0)) {
        return Err(Error::Domain(format!(
            "uniform noise {} at row {}, column {} is outside (0, 1)",
            noise_u.as_slice()[pos],
            pos / logits.len().max(1),
            pos % logits.len().max(1)
        )));
    }
    Ok(())
}

/// Relaxed masks, one row per sample and one column per feature.
pub fn sample_concrete(logits: &[f64], noise_u: &Matrix, temperature: f64) -> Result<Matrix> {
    check_noise(logits, noise_u, temperature)?;
    let inv_t = 1.0 / temperature;
    let d = logits.len();
    let data = noise_u
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, &u)| relaxed(logits[k % d], u, inv_t))
        .collect();
    Ok(Matrix::from_raw(noise_u.rows(), d, data))
}

/// Gradient of a scalar with respect to the logits, given its gradient
/// `upstream` with respect to the masks drawn from the same noise. Uses
/// `∂z̃/∂α = z̃(1 − z̃)/t`, summed over samples.
pub fn concrete_grad(
    logits: &[f64],
    noise_u: &Matrix,
    temperature: f64,
    upstream: &Matrix,
) -> Result<Vec<f64>> {
    if upstream.shape() != noise_u.shape() {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} vs noise {:?}",
            upstream.shape(),
            noise_u.shape()
        )));
    }
    let masks = sample_concrete(logits, noise_u, temperature)?;
    Ok(mask_grad_to_logits(&masks, temperature, upstream))
}

fn mask_grad_to_logits(masks: &Matrix, temperature: f64, upstream: &Matrix) -> Vec<f64> {
    let inv_t = 1.0 / temperature;
    let mut grad = vec![0.0; masks.cols()];
    for r in 0..masks.rows() {
        for ((g, &z), &up) in grad.iter_mut().zip(masks.row(r)).zip(upstream.row(r)) {
            *g += up * z * (1.0 - z) * inv_t;
        }
    }
    grad
}

/// Value and gradients of the masked objective on one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct FrLoss {
    pub value: f64,
    pub data_loss: f64,
    pub penalty: f64,
    /// ∂value/∂z̃, one entry per sample and feature.
    pub mask_grad: Matrix,
    /// ∂value/∂α.
    pub logit_grad: Vec<f64>,
}

/// Masked data loss plus `λ · mean_i Σ_j z̃_ij`, evaluated through the model
/// in eval mode. Model parameters are read, never written.
pub fn fr_loss(
    model: &MlpModel,
    batch: &Dataset,
    masks: &Matrix,
    temperature: f64,
    lambda: f64,
) -> Result<FrLoss> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    fr_loss_with_mode(model, batch, masks, temperature, lambda, Mode::Eval, &mut rng).map(|(l, _)| l)
}

fn fr_loss_with_mode<R: Rng>(
    model: &MlpModel,
    batch: &Dataset,
    masks: &Matrix,
    temperature: f64,
    lambda: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(FrLoss, crate::nn::Gradients)> {
    if masks.shape() != batch.x.shape() {
        return Err(Error::Shape(format!(
            "masks {:?} vs batch {:?}",
            masks.shape(),
            batch.x.shape()
        )));
    }
    let m = batch.len();
    if m == 0 {
        return Err(Error::EmptyDataset("empty batch".into()));
    }
    let masked = batch.x.hadamard(masks)?;
    let (out, cache) = model.forward(&masked, mode, rng)?;
    let (data_loss, out_grad) = model.task().loss(&out, &batch.targets())?;
    let grads = model.backward(&cache, &out_grad)?;

    let per_sample = lambda / m as f64;
    let penalty = per_sample * masks.as_slice().iter().sum::<f64>();
    let mut mask_grad = grads.input.hadamard(&batch.x)?;
    for g in mask_grad.as_mut_slice() {
        *g += per_sample;
    }
    let logit_grad = mask_grad_to_logits(masks, temperature, &mask_grad);
    Ok((
        FrLoss {
            value: data_loss + penalty,
            data_loss,
            penalty,
            mask_grad,
            logit_grad,
        },
        grads,
    ))
}

/// Draws an `rows × cols` matrix of uniforms strictly inside (0, 1).
pub fn open_uniforms<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(Open01)).collect();
    Matrix::from_raw(rows, cols, data)
}

/// Mean objective over one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrEpoch {
    pub lambda: f64,
    pub loss: f64,
    pub data_loss: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone)]
pub struct DropoutFit {
    pub keep_probs: KeepProbVector,
    pub layer: FeatureDropoutLayer,
    pub history: Vec<FrEpoch>,
    /// Every θ ended above 0.99 or below 0.01, which usually means λ is
    /// mis-scaled.
    pub saturated: bool,
    /// The fine-tuned model when `freeze_model` is off.
    pub tuned_model: Option<MlpModel>,
}

/// Fits the dropout logits on `train_set` with mini-batch Adam.
///
/// The λ schedule follows [`anneal_lambda`]. Each batch draws fresh
/// uniforms per sample and feature from a generator seeded by
/// `(seed, epoch, batch)`.
pub fn fit_dropout_rates(
    model: &MlpModel,
    train_set: &Dataset,
    config: &FrConfig,
) -> Result<DropoutFit> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("dropout ranking needs training samples".into()));
    }
    if train_set.n_features() != model.input_dim() {
        return Err(Error::Shape(format!(
            "data has {} features, model expects {}",
            train_set.n_features(),
            model.input_dim()
        )));
    }
    let d = train_set.n_features();
    let mut layer = FeatureDropoutLayer::new(d);
    let mut adam = AdamState::new(&[d]);

    let mut tuned = (!config.freeze_model).then(|| model.clone());
    let layout = model.param_layout();
    let mut model_adam = AdamState::new(&layout.iter().map(|p| p.len).collect::<Vec<_>>());

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seeds::derive(config.seed, &[0]));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lambda = anneal_lambda(epoch, config);
        order.shuffle(&mut shuffle_rng);
        let mut sums = [0.0f64; 3];
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = train_set.subset(chunk);
            let mut noise_rng = ChaCha8Rng::seed_from_u64(seeds::derive(
                config.seed,
                &[seeds::stream::NOISE, epoch as u64, b as u64],
            ));
            let noise = open_uniforms(chunk.len(), d, &mut noise_rng);
            let masks = sample_concrete(layer.logits(), &noise, config.temperature)?;

            let loss = match tuned.as_mut() {
                None => fr_loss(model, &batch, &masks, config.temperature, lambda)?,
                Some(m) => {
                    let (loss, grads) = fr_loss_with_mode(
                        m,
                        &batch,
                        &masks,
                        config.temperature,
                        lambda,
                        Mode::Train,
                        &mut noise_rng,
                    )?;
                    let mut blocks: Vec<ParamBlock<'_>> = m
                        .params_mut()
                        .into_iter()
                        .zip(&grads.params)
                        .map(|(values, grad)| ParamBlock {
                            values,
                            grad,
                            decay: false,
                        })
                        .collect();
                    model_adam.step(&mut blocks, config.learning_rate, 0.0)?;
                    loss
                }
            };
            if !loss.value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    value: loss.value,
                });
            }
            adam.step(
                &mut [ParamBlock {
                    values: layer.logits_mut(),
                    grad: &loss.logit_grad,
                    decay: false,
                }],
                config.learning_rate,
                0.0,
            )?;
            let w = chunk.len() as f64;
            sums[0] += loss.value * w;
            sums[1] += loss.data_loss * w;
            sums[2] += loss.penalty * w;
        }
        let n = train_set.len() as f64;
        history.push(FrEpoch {
            lambda,
            loss: sums[0] / n,
            data_loss: sums[1] / n,
            penalty: sums[2] / n,
        });
    }

    let keep_probs = layer.keep_probs();
    let saturated = !keep_probs.is_empty()
        && (keep_probs.as_slice().iter().all(|&p| p > 0.99)
            || keep_probs.as_slice().iter().all(|&p| p < 0.01));
    if saturated {
        log::warn!(
            "all {} keep probabilities saturated at one end (lambda = {}); lambda is likely mis-scaled",
            d,
            config.lambda
        );
    }
    Ok(DropoutFit {
        keep_probs,
        layer,
        history,
        saturated,
        tuned_model: tuned,
    })
}

/// Data loss on `data` under relaxed masks drawn from `layer`, averaged
/// over `draws` independent mask draws. Used to compare λ values.
pub fn masked_loss(
    model: &MlpModel,
    data: &Dataset,
    layer: &FeatureDropoutLayer,
    temperature: f64,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = data.targets();
    let mut total = 0.0;
    for _ in 0..draws.max(1) {
        let noise = open_uniforms(data.len(), data.n_features(), &mut rng);
        let masks = sample_concrete(layer.logits(), &noise, temperature)?;
        let out = model.forward_eval(&data.x.hadamard(&masks)?)?;
        total += model.task().loss(&out, &targets)?.0;
    }
    Ok(total / draws.max(1) as f64)
}

/// Ranks features by dropout rate ascending, i.e. keep probability
/// descending, lower index first on ties.
pub fn rank_from_rates(keep_probs: &KeepProbVector) -> FeatureRanking {
    FeatureRanking::from_scores(RankerKind::DropoutFr, keep_probs.as_slice().to_vec(), true)
        .expect("keep probabilities are finite")
}
