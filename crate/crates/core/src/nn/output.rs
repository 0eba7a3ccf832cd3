//! Output layer pieces: normalized-sigmoid class scores, binary cross-entropy
//! and batch normalization of the output pre-activations.

use serde::{Deserialize, Serialize};

use super::tensor::{logistic, Tensor};
use crate::error::{Error, Result};

pub const PROB_CLAMP: f64 = 1e-12;

/// `p_k = σ(z_k) / Σ_j σ(z_j)`.
pub fn normalized_sigmoid(z: &[f64]) -> Vec<f64> {
    let s: Vec<f64> = z.iter().map(|&v| logistic(v)).collect();
    let total: f64 = s.iter().sum();
    s.iter().map(|v| v / total).collect()
}

/// dL/dz from dL/dp for [`normalized_sigmoid`].
pub fn normalized_sigmoid_backward(z: &[f64], dp: &[f64]) -> Vec<f64> {
    let s: Vec<f64> = z.iter().map(|&v| logistic(v)).collect();
    let total: f64 = s.iter().sum();
    let inner: f64 = s.iter().zip(dp).map(|(sk, dk)| sk / total * dk).sum();
    s.iter().zip(dp).map(|(&sj, &dj)| sj * (1.0 - sj) / total * (dj - inner)).collect()
}

/// Class probabilities `Pr(y=i | h)` for output weights `w` (`K × d`).
pub fn output_score(h: &[f64], w: &Tensor) -> Result<Vec<f64>> {
    if w.shape.len() != 2 || w.cols() != h.len() || w.rows() == 0 {
        return Err(Error::Shape(format!(
            "output weights {:?} do not match hidden size {}",
            w.shape,
            h.len()
        )));
    }
    let z: Vec<f64> = (0..w.rows()).map(|k| super::tensor::dot(w.row(k), h)).collect();
    Ok(normalized_sigmoid(&z))
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Mean binary cross-entropy over the batch.
pub fn bce_loss(predictions: &[f64], labels: &[u8]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("bce_loss needs a non-empty batch".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let n = predictions.len() as f64;
    let sum: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clamp_prob(p);
            let y = y as f64;
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    Ok(-sum / n)
}

/// dL/dp_i of [`bce_loss`]; zero where the clamp is active.
pub fn bce_grad(predictions: &[f64], labels: &[u8]) -> Vec<f64> {
    let n = predictions.len() as f64;
    predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                return 0.0;
            }
            let y = y as f64;
            -(y / p - (1.0 - y) / (1.0 - p)) / n
        })
        .collect()
}

/// Per-unit batch normalization with running statistics for inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f64,
    pub momentum: f64,
}

/// Batch statistics kept for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache {
    pub normalized: Vec<Vec<f64>>,
    pub inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(units: usize) -> Self {
        let mut gamma = Tensor::zeros(&[units]);
        gamma.fill(1.0);
        let mut running_var = Tensor::zeros(&[units]);
        running_var.fill(1.0);
        Self {
            gamma,
            beta: Tensor::zeros(&[units]),
            running_mean: Tensor::zeros(&[units]),
            running_var,
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn units(&self) -> usize {
        self.gamma.len()
    }

    pub fn infer(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(k, &v)| {
                let xhat = (v - self.running_mean.values[k]) / (self.running_var.values[k] + self.eps).sqrt();
                self.gamma.values[k] * xhat + self.beta.values[k]
            })
            .collect()
    }

    /// Normalizes with batch statistics. Running statistics are not touched;
    /// call [`BatchNorm::update_running`] after a training step.
    pub fn forward_batch(&self, z: &[Vec<f64>]) -> (Vec<Vec<f64>>, BatchNormCache, Vec<f64>, Vec<f64>) {
        let n = z.len() as f64;
        let k = self.units();
        let mut mean = vec![0.0; k];
        let mut var = vec![0.0; k];
        for row in z {
            for j in 0..k {
                mean[j] += row[j] / n;
            }
        }
        for row in z {
            for j in 0..k {
                var[j] += (row[j] - mean[j]).powi(2) / n;
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let normalized: Vec<Vec<f64>> = z
            .iter()
            .map(|row| (0..k).map(|j| (row[j] - mean[j]) * inv_std[j]).collect())
            .collect();
        let out = normalized
            .iter()
            .map(|xh| (0..k).map(|j| self.gamma.values[j] * xh[j] + self.beta.values[j]).collect())
            .collect();
        (out, BatchNormCache { normalized, inv_std }, mean, var)
    }

    pub fn update_running(&mut self, mean: &[f64], var: &[f64]) {
        let m = self.momentum;
        for j in 0..self.units() {
            self.running_mean.values[j] = (1.0 - m) * self.running_mean.values[j] + m * mean[j];
            self.running_var.values[j] = (1.0 - m) * self.running_var.values[j] + m * var[j];
        }
    }

    /// Returns dL/dz and accumulates dγ, dβ.
    pub fn backward_batch(
        &self,
        cache: &BatchNormCache,
        dy: &[Vec<f64>],
        dgamma: &mut Tensor,
        dbeta: &mut Tensor,
    ) -> Vec<Vec<f64>> {
        let n = dy.len() as f64;
        let k = self.units();
        let mut sum_dxh = vec![0.0; k];
        let mut sum_dxh_xh = vec![0.0; k];
        for (row, xh) in dy.iter().zip(&cache.normalized) {
            for j in 0..k {
                dgamma.values[j] += row[j] * xh[j];
                dbeta.values[j] += row[j];
                let dxh = row[j] * self.gamma.values[j];
                sum_dxh[j] += dxh;
                sum_dxh_xh[j] += dxh * xh[j];
            }
        }
        dy.iter()
            .zip(&cache.normalized)
            .map(|(row, xh)| {
                (0..k)
                    .map(|j| {
                        let dxh = row[j] * self.gamma.values[j];
                        cache.inv_std[j] / n * (n * dxh - sum_dxh[j] - xh[j] * sum_dxh_xh[j])
                    })
                    .collect()
            })
            .collect()
    }
}
