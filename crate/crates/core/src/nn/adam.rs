use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Moment accumulators for Adam, one pair of vectors per parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

/// One parameter block handed to [`AdamState::step`].
pub struct ParamBlock<'a> {
    pub values: &'a mut [f64],
    pub grad: &'a [f64],
    /// Whether the ℓ2 term applies to this block.
    pub decay: bool,
}

impl AdamState {
    pub fn new(block_lens: &[usize]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// One bias-corrected Adam update. For decaying blocks the gradient is
    /// `g + l2_penalty · w` before the moments are updated.
    pub fn step(&mut self, blocks: &mut [ParamBlock<'_>], lr: f64, l2_penalty: f64) -> Result<()> {
        if blocks.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "{} parameter blocks, optimizer tracks {}",
                blocks.len(),
                self.m.len()
            )));
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.values.len() != self.m[i].len() || b.grad.len() != self.m[i].len() {
                return Err(Error::Shape(format!(
                    "block {i}: {} values / {} grads, optimizer expects {}",
                    b.values.len(),
                    b.grad.len(),
                    self.m[i].len()
                )));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - self.beta1.powf(t);
        let c2 = 1.0 - self.beta2.powf(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (b, (m, v)) in blocks.iter_mut().zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let l2 = if b.decay { l2_penalty } else { 0.0 };
            for j in 0..m.len() {
                let g = b.grad[j] + l2 * b.values[j];
                m[j] = b1 * m[j] + (1.0 - b1) * g;
                v[j] = b2 * v[j] + (1.0 - b2) * g * g;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                b.values[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
