//! The feed-forward model: forward pass, reverse-mode gradients and the
//! on-disk model format.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{sigmoid, Layer, LayerSpec};
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::matrix::Matrix;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    BinaryClassification,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Task::Regression),
            "binary_classification" | "classification" => Ok(Task::BinaryClassification),
            other => Err(Error::Unknown {
                what: "task",
                name: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Hidden-layer recipe: `Dense → BatchNorm → ReLU → Dropout` per hidden
/// width, then a 1-unit linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub batch_norm: bool,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden: vec![40, 20],
            dropout: 0.5,
            batch_norm: true,
        }
    }
}

impl Architecture {
    pub fn layer_specs(&self, input_dim: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut width = input_dim;
        for &h in &self.hidden {
            specs.push(LayerSpec::Dense {
                input: width,
                output: h,
            });
            if self.batch_norm {
                specs.push(LayerSpec::BatchNorm { dim: h });
            }
            specs.push(LayerSpec::Relu);
            if self.dropout > 0.0 {
                specs.push(LayerSpec::Dropout { rate: self.dropout });
            }
            width = h;
        }
        specs.push(LayerSpec::Dense {
            input: width,
            output: 1,
        });
        specs
    }
}

/// Which parameter of a layer a gradient block belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weights,
    Bias,
    Scale,
    Shift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamInfo {
    pub layer: usize,
    pub kind: ParamKind,
    pub len: usize,
}

impl ParamInfo {
    /// The ℓ2 penalty touches dense weights only.
    pub fn decays(&self) -> bool {
        self.kind == ParamKind::Weights
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    task: Task,
    input_dim: usize,
    layers: Vec<Layer>,
    #[serde(skip)]
    version: u64,
}

#[derive(Debug, Clone)]
enum LayerCache {
    Dense { input: Matrix },
    Relu { input: Matrix },
    Sigmoid { output: Matrix },
    BatchNorm {
        normalized: Matrix,
        inv_std: Vec<f64>,
        /// Present in train mode: batch mean and unbiased batch variance.
        batch_stats: Option<(Vec<f64>, Vec<f64>)>,
    },
    Dropout { mask: Option<Vec<f64>> },
}

/// Activations recorded by [`MlpModel::forward`] for one batch.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    mode: Mode,
    rows: usize,
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// Gradient blocks in [`MlpModel::param_layout`] order plus the gradient
/// with respect to the batch input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<Vec<f64>>,
    pub input: Matrix,
}

impl MlpModel {
    pub fn new(task: Task, input_dim: usize, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .iter()
            .map(|&s| Layer::from_spec(s, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(task, input_dim, layers)
    }

    pub fn with_architecture(
        task: Task,
        input_dim: usize,
        arch: &Architecture,
        seed: u64,
    ) -> Result<Self> {
        Self::new(task, input_dim, &arch.layer_specs(input_dim), seed)
    }

    /// Validates dimension chaining and the 1-unit output.
    pub fn from_layers(task: Task, input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        let mut width = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if let Some(inp) = layer.input_dim() {
                if inp != width {
                    return Err(Error::Shape(format!(
                        "layer {i} expects width {inp} but receives {width}"
                    )));
                }
            }
            if let Some(out) = layer.output_dim() {
                width = out;
            }
        }
        match layers.last() {
            Some(Layer::Dense(d)) if d.output() == 1 => {}
            _ => {
                return Err(Error::Config(
                    "model must end in a 1-unit dense output layer".into(),
                ))
            }
        }
        Ok(Self {
            task,
            input_dim,
            layers,
            version: 0,
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    /// Counter bumped by every mutable parameter access.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn first_dense_mut(&mut self) -> Option<&mut super::layer::Dense> {
        self.version += 1;
        self.layers.iter_mut().find_map(|l| match l {
            Layer::Dense(d) => Some(d),
            _ => None,
        })
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.version += 1;
        &mut self.layers
    }

    pub fn param_layout(&self) -> Vec<ParamInfo> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense(d) => {
                    out.push(ParamInfo {
                        layer: i,
                        kind: ParamKind::Weights,
                        len: d.weights.as_slice().len(),
                    });
                    out.push(ParamInfo {
                        layer: i,
                        kind: ParamKind::Bias,
                        len: d.bias.len(),
                    });
                }
                Layer::BatchNorm(bn) => {
                    out.push(ParamInfo {
                        layer: i,
                        kind: ParamKind::Scale,
                        len: bn.gamma.len(),
                    });
                    out.push(ParamInfo {
                        layer: i,
                        kind: ParamKind::Shift,
                        len: bn.beta.len(),
                    });
                }
                _ => {}
            }
        }
        out
    }

    /// Learnable parameter blocks in [`Self::param_layout`] order.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weights.as_mut_slice());
                    out.push(&mut d.bias);
                }
                Layer::BatchNorm(bn) => {
                    out.push(&mut bn.gamma);
                    out.push(&mut bn.beta);
                }
                _ => {}
            }
        }
        out
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weights.as_slice());
                    out.push(&d.bias);
                }
                Layer::BatchNorm(bn) => {
                    out.push(&bn.gamma);
                    out.push(&bn.beta);
                }
                _ => {}
            }
        }
        out
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim {
            return Err(Error::Shape(format!(
                "batch has {} columns, model expects {}",
                batch.cols(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Runs the network on `batch` and returns raw outputs (logits for
    /// classification) with the activation record needed by
    /// [`Self::backward`]. In eval mode dropout is the identity and batch
    /// norm uses running statistics; `rng` is only drawn from in train mode.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        batch: &Matrix,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Matrix, ForwardCache)> {
        self.check_input(batch)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = batch.clone();
        for layer in &self.layers {
            let (next, cache) = forward_layer(layer, h, mode, rng)?;
            caches.push(cache);
            h = next;
        }
        if !h.is_finite() {
            return Err(Error::Domain("forward pass produced non-finite values".into()));
        }
        Ok((
            h,
            ForwardCache {
                version: self.version,
                mode,
                rows: batch.rows(),
                layers: caches,
            },
        ))
    }

    /// Eval-mode forward without a cache.
    pub fn forward_eval(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut rng = NoRng;
        let mut h = batch.clone();
        for layer in &self.layers {
            h = forward_layer(layer, h, Mode::Eval, &mut rng)?.0;
        }
        Ok(h)
    }

    /// Eval-mode predictions: regression outputs, or probabilities for
    /// classification.
    pub fn predict(&self, data: &Matrix) -> Result<Matrix> {
        let out = self.forward_eval(data)?;
        Ok(match self.task {
            Task::Regression => out,
            Task::BinaryClassification => out.map(sigmoid),
        })
    }

    /// Chain rule from `loss_grad` (∂loss/∂output) back to every parameter
    /// and to the input batch.
    pub fn backward(&self, cache: &ForwardCache, loss_grad: &Matrix) -> Result<Gradients> {
        if cache.version != self.version {
            return Err(Error::StaleCache {
                cache: cache.version,
                model: self.version,
            });
        }
        if cache.layers.len() != self.layers.len() {
            return Err(Error::Shape("cache does not belong to this model".into()));
        }
        if loss_grad.shape() != (cache.rows, 1) {
            return Err(Error::Shape(format!(
                "loss gradient shape {:?}, expected ({}, 1)",
                loss_grad.shape(),
                cache.rows
            )));
        }

        let mut grad = loss_grad.clone();
        let mut blocks_rev: Vec<Vec<f64>> = Vec::new();
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            grad = match (layer, lc) {
                (Layer::Dense(d), LayerCache::Dense { input }) => {
                    let dw = input.t_matmul(&grad)?;
                    let db = grad.column_sums();
                    let dx = grad.matmul_t(&d.weights)?;
                    blocks_rev.push(db);
                    blocks_rev.push(dw.into_vec());
                    dx
                }
                (Layer::Relu, LayerCache::Relu { input }) => {
                    let mut g = grad;
                    for (gv, &x) in g.as_mut_slice().iter_mut().zip(input.as_slice()) {
                        if x <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    g
                }
                (Layer::Sigmoid, LayerCache::Sigmoid { output }) => {
                    let mut g = grad;
                    for (gv, &s) in g.as_mut_slice().iter_mut().zip(output.as_slice()) {
                        *gv *= s * (1.0 - s);
                    }
                    g
                }
                (
                    Layer::BatchNorm(bn),
                    LayerCache::BatchNorm {
                        normalized,
                        inv_std,
                        batch_stats,
                    },
                ) => {
                    let (n, dim) = grad.shape();
                    let mut dgamma = vec![0.0; dim];
                    let mut dbeta = vec![0.0; dim];
                    for r in 0..n {
                        let g = grad.row(r);
                        let xh = normalized.row(r);
                        for c in 0..dim {
                            dgamma[c] += g[c] * xh[c];
                            dbeta[c] += g[c];
                        }
                    }
                    let mut dx = Matrix::zeros(n, dim);
                    if batch_stats.is_some() {
                        // Gradient through the batch mean and variance.
                        let nf = n as f64;
                        for r in 0..n {
                            let g = grad.row(r);
                            let xh = normalized.row(r);
                            let out = dx.row_mut(r);
                            for c in 0..dim {
                                let dxh = g[c] * bn.gamma[c];
                                let sum_dxh = dbeta[c] * bn.gamma[c];
                                let sum_dxh_xh = dgamma[c] * bn.gamma[c];
                                out[c] =
                                    inv_std[c] / nf * (nf * dxh - sum_dxh - xh[c] * sum_dxh_xh);
                            }
                        }
                    } else {
                        for r in 0..n {
                            let g = grad.row(r);
                            let out = dx.row_mut(r);
                            for c in 0..dim {
                                out[c] = g[c] * bn.gamma[c] * inv_std[c];
                            }
                        }
                    }
                    blocks_rev.push(dbeta);
                    blocks_rev.push(dgamma);
                    dx
                }
                (Layer::Dropout { .. }, LayerCache::Dropout { mask }) => match mask {
                    Some(mask) => {
                        let mut g = grad;
                        for (gv, m) in g.as_mut_slice().iter_mut().zip(mask) {
                            *gv *= m;
                        }
                        g
                    }
                    None => grad,
                },
                _ => return Err(Error::Shape("cache does not belong to this model".into())),
            };
        }
        blocks_rev.reverse();
        Ok(Gradients {
            params: blocks_rev,
            input: grad,
        })
    }

    /// Folds the batch statistics recorded in a train-mode cache into the
    /// batch-norm running averages.
    pub fn absorb_batch_statistics(&mut self, cache: &ForwardCache) {
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers) {
            if let (
                Layer::BatchNorm(bn),
                LayerCache::BatchNorm {
                    batch_stats: Some((mean, var)),
                    ..
                },
            ) = (layer, lc)
            {
                let m = bn.momentum;
                for c in 0..bn.gamma.len() {
                    bn.running_mean[c] = (1.0 - m) * bn.running_mean[c] + m * mean[c];
                    bn.running_var[c] = (1.0 - m) * bn.running_var[c] + m * var[c];
                }
            }
        }
    }

    pub fn to_file(&self, train_config: Option<&TrainConfig>) -> ModelFile {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            task: self.task,
            input_dim: self.input_dim,
            layers: self.layers.clone(),
            train_config: train_config.cloned(),
        }
    }

    pub fn save(&self, path: &Path, train_config: Option<&TrainConfig>) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.to_file(train_config))?;
        write_atomic(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<(Self, Option<TrainConfig>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text)?;
        file.into_model()
    }
}

/// Serialized model: format version, task, layers with parameters, and the
/// training configuration that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub task: Task,
    pub input_dim: usize,
    pub layers: Vec<Layer>,
    pub train_config: Option<TrainConfig>,
}

impl ModelFile {
    pub fn into_model(self) -> Result<(MlpModel, Option<TrainConfig>)> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: self.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let model = MlpModel::from_layers(self.task, self.input_dim, self.layers)?;
        Ok((model, self.train_config))
    }
}

/// Stand-in generator for eval-mode passes, which never sample.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("eval-mode forward does not sample")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("eval-mode forward does not sample")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("eval-mode forward does not sample")
    }
    fn try_fill_bytes(&mut self, _: &mut [u8]) -> std::result::Result<(), rand::Error> {
        unreachable!("eval-mode forward does not sample")
    }
}

fn forward_layer<R: Rng + ?Sized>(
    layer: &Layer,
    h: Matrix,
    mode: Mode,
    rng: &mut R,
) -> Result<(Matrix, LayerCache)> {
    Ok(match layer {
        Layer::Dense(d) => {
            let mut out = h.matmul(&d.weights)?;
            out.add_row_vector(&d.bias);
            (out, LayerCache::Dense { input: h })
        }
        Layer::Relu => {
            let out = h.map(|v| v.max(0.0));
            (out, LayerCache::Relu { input: h })
        }
        Layer::Sigmoid => {
            let out = h.map(sigmoid);
            (out.clone(), LayerCache::Sigmoid { output: out })
        }
        Layer::BatchNorm(bn) => {
            let (n, dim) = h.shape();
            let (mean, var_norm, batch_stats) = match mode {
                Mode::Train => {
                    if n == 0 {
                        return Err(Error::EmptyDataset("batch-norm on an empty batch".into()));
                    }
                    let mean = h.column_means();
                    let mut var = vec![0.0; dim];
                    for r in 0..n {
                        for (c, v) in h.row(r).iter().enumerate() {
                            let d = v - mean[c];
                            var[c] += d * d;
                        }
                    }
                    let biased: Vec<f64> = var.iter().map(|s| s / n as f64).collect();
                    let unbiased: Vec<f64> = if n > 1 {
                        var.iter().map(|s| s / (n - 1) as f64).collect()
                    } else {
                        biased.clone()
                    };
                    (mean.clone(), biased, Some((mean, unbiased)))
                }
                Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone(), None),
            };
            let inv_std: Vec<f64> = var_norm.iter().map(|v| 1.0 / (v + bn.eps).sqrt()).collect();
            let mut normalized = Matrix::zeros(n, dim);
            let mut out = Matrix::zeros(n, dim);
            for r in 0..n {
                let x = h.row(r);
                let xh = normalized.row_mut(r);
                for c in 0..dim {
                    xh[c] = (x[c] - mean[c]) * inv_std[c];
                }
                let o = out.row_mut(r);
                let xh = normalized.row(r);
                for c in 0..dim {
                    o[c] = bn.gamma[c] * xh[c] + bn.beta[c];
                }
            }
            (
                out,
                LayerCache::BatchNorm {
                    normalized,
                    inv_std,
                    batch_stats,
                },
            )
        }
        Layer::Dropout { rate } => {
            if mode == Mode::Eval || *rate == 0.0 {
                (h, LayerCache::Dropout { mask: None })
            } else {
                let keep = 1.0 - rate;
                let scale = 1.0 / keep;
                let mask: Vec<f64> = (0..h.as_slice().len())
                    .map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 })
                    .collect();
                let mut out = h;
                for (v, m) in out.as_mut_slice().iter_mut().zip(&mask) {
                    *v *= m;
                }
                (out, LayerCache::Dropout { mask: Some(mask) })
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::Dense;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn identity_dense_layer_reproduces_input() {
        let layer = Layer::Dense(Dense {
            weights: Matrix::identity(2),
            bias: vec![0.0, 0.0],
        });
        let tail = Layer::Dense(Dense {
            weights: Matrix::new(2, 1, vec![1.0, 0.0]).unwrap(),
            bias: vec![0.0],
        });
        let model = MlpModel::from_layers(Task::Regression, 2, vec![layer.clone(), tail]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let (_, cache) = model.forward(&x, Mode::Eval, &mut rng()).unwrap();
        // the hidden activation is the input itself
        match &cache.layers[1] {
            LayerCache::Dense { input } => assert_eq!(input.as_slice(), &[1.0, 2.0]),
            _ => unreachable!(),
        }
        assert_eq!(model.forward_eval(&x).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn rejects_unchained_dimensions_and_missing_output() {
        let specs = [
            LayerSpec::Dense { input: 3, output: 4 },
            LayerSpec::Dense { input: 5, output: 1 },
        ];
        assert!(matches!(
            MlpModel::new(Task::Regression, 3, &specs, 0),
            Err(Error::Shape(_))
        ));
        let specs = [LayerSpec::Dense { input: 3, output: 2 }];
        assert!(matches!(
            MlpModel::new(Task::Regression, 3, &specs, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let model =
            MlpModel::with_architecture(Task::Regression, 4, &Architecture::default(), 1).unwrap();
        let x = Matrix::zeros(2, 3);
        assert!(matches!(
            model.forward(&x, Mode::Eval, &mut rng()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn hand_computed_two_layer_relu_net() {
        // W1 = [[1,-1],[2,0.5]], b1 = [0, -1]; W2 = [[1],[-2]], b2 = 0.5
        let l1 = Layer::Dense(Dense {
            weights: Matrix::from_rows(&[vec![1.0, -1.0], vec![2.0, 0.5]]).unwrap(),
            bias: vec![0.0, -1.0],
        });
        let l2 = Layer::Dense(Dense {
            weights: Matrix::from_rows(&[vec![1.0], vec![-2.0]]).unwrap(),
            bias: vec![0.5],
        });
        let model = MlpModel::from_layers(Task::Regression, 2, vec![l1, Layer::Relu, l2]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, 2.0], vec![0.5, -3.0]]).unwrap();
        // row 1: pre = [3, -0.5] → relu [3, 0] → 3 + 0.5 = 3.5
        // row 2: pre = [3, 1] → [3, 1] → 3 - 2 + 0.5 = 1.5
        // row 3: pre = [-5.5, -3] → [0, 0] → 0.5
        let out = model.forward_eval(&x).unwrap();
        assert_eq!(out.as_slice(), &[3.5, 1.5, 0.5]);
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let model =
            MlpModel::with_architecture(Task::Regression, 5, &Architecture::default(), 9).unwrap();
        let x = Matrix::new(4, 5, (0..20).map(|i| (i as f64).sin()).collect()).unwrap();
        let a = model.forward_eval(&x).unwrap();
        let b = model.forward_eval(&x).unwrap();
        assert_eq!(a, b);
        let (c, _) = model.forward(&x, Mode::Eval, &mut rng()).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn zero_loss_gradient_gives_zero_parameter_gradients() {
        let model =
            MlpModel::with_architecture(Task::Regression, 3, &Architecture::default(), 2).unwrap();
        let x = Matrix::new(6, 3, (0..18).map(|i| (i as f64 * 0.7).cos()).collect()).unwrap();
        let (_, cache) = model.forward(&x, Mode::Train, &mut rng()).unwrap();
        let grads = model.backward(&cache, &Matrix::zeros(6, 1)).unwrap();
        for block in &grads.params {
            assert!(block.iter().all(|&g| g == 0.0));
        }
        assert!(grads.input.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut model =
            MlpModel::with_architecture(Task::Regression, 3, &Architecture::default(), 2).unwrap();
        let x = Matrix::zeros(2, 3);
        let (_, cache) = model.forward(&x, Mode::Train, &mut rng()).unwrap();
        model.params_mut()[0][0] += 1.0;
        assert!(matches!(
            model.backward(&cache, &Matrix::zeros(2, 1)),
            Err(Error::StaleCache { .. })
        ));
    }

    #[test]
    fn gradient_shapes_mirror_parameters() {
        let model =
            MlpModel::with_architecture(Task::Regression, 3, &Architecture::default(), 2).unwrap();
        let x = Matrix::zeros(4, 3);
        let (_, cache) = model.forward(&x, Mode::Train, &mut rng()).unwrap();
        let grads = model.backward(&cache, &Matrix::filled(4, 1, 1.0)).unwrap();
        let layout = model.param_layout();
        assert_eq!(layout.len(), grads.params.len());
        for (info, g) in layout.iter().zip(&grads.params) {
            assert_eq!(info.len, g.len());
        }
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = MlpModel::with_architecture(
            Task::BinaryClassification,
            7,
            &Architecture::default(),
            5,
        )
        .unwrap();
        model.save(&path, Some(&TrainConfig::default())).unwrap();
        let (loaded, cfg) = MlpModel::load(&path).unwrap();
        assert_eq!(cfg, Some(TrainConfig::default()));
        let x = Matrix::new(3, 7, (0..21).map(|i| (i as f64).sqrt() - 2.0).collect()).unwrap();
        let a = model.predict(&x).unwrap();
        let b = loaded.predict(&x).unwrap();
        assert_eq!(
            a.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn classification_predictions_are_probabilities() {
        let model = MlpModel::with_architecture(
            Task::BinaryClassification,
            2,
            &Architecture::default(),
            5,
        )
        .unwrap();
        let x = Matrix::new(3, 2, vec![100.0, -50.0, 0.0, 0.0, -100.0, 40.0]).unwrap();
        let p = model.predict(&x).unwrap();
        assert!(p.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
