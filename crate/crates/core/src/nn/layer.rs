//! Layer kinds and their learned parameters.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const BATCH_NORM_MOMENTUM: f64 = 0.1;
pub const BATCH_NORM_EPS: f64 = 1e-5;

/// Shape-level description of a layer, without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    Relu,
    Sigmoid,
    BatchNorm { dim: usize },
    Dropout { rate: f64 },
}

/// Fully connected layer, `y = x·W + b` with `W` stored `input × output`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        let data = (0..input * output).map(|_| dist.sample(rng)).collect();
        Self {
            weights: Matrix::from_raw(input, output, data),
            bias: vec![0.0; output],
        }
    }

    pub fn input(&self) -> usize {
        self.weights.rows()
    }

    pub fn output(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: BATCH_NORM_MOMENTUM,
            eps: BATCH_NORM_EPS,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }
}

/// A layer together with whatever it learned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Dense(Dense),
    Relu,
    Sigmoid,
    BatchNorm(BatchNorm),
    Dropout { rate: f64 },
}

impl Layer {
    pub fn from_spec<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Result<Self> {
        Ok(match spec {
            LayerSpec::Dense { input, output } => {
                if input == 0 || output == 0 {
                    return Err(Error::Config("dense layer dimensions must be positive".into()));
                }
                Layer::Dense(Dense::glorot(input, output, rng))
            }
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Sigmoid => Layer::Sigmoid,
            LayerSpec::BatchNorm { dim } => {
                if dim == 0 {
                    return Err(Error::Config("batch-norm dimension must be positive".into()));
                }
                Layer::BatchNorm(BatchNorm::new(dim))
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
                }
                Layer::Dropout { rate }
            }
        })
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense(d) => LayerSpec::Dense {
                input: d.input(),
                output: d.output(),
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::Sigmoid => LayerSpec::Sigmoid,
            Layer::BatchNorm(bn) => LayerSpec::BatchNorm { dim: bn.dim() },
            Layer::Dropout { rate } => LayerSpec::Dropout { rate: *rate },
        }
    }

    /// Input width for layers that fix one.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            Layer::Dense(d) => Some(d.input()),
            Layer::BatchNorm(bn) => Some(bn.dim()),
            _ => None,
        }
    }

    pub fn output_dim(&self) -> Option<usize> {
        match self {
            Layer::Dense(d) => Some(d.output()),
            Layer::BatchNorm(bn) => Some(bn.dim()),
            _ => None,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
