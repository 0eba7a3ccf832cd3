//! Recurrent steganalysis model, written out by hand: nucleotide embedding,
//! sequence autoencoder pretraining, stacked peephole LSTMs, batch-normalized
//! normalized-sigmoid output, cross-entropy loss and Adam.

pub mod adam;
pub mod autoencoder;
pub mod checkpoint;
pub mod gradcheck;
pub mod init;
pub mod lstm;
pub mod model;
pub mod output;
pub mod tensor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqio::Base;
pub use adam::{adam_step, AdamConfig, AdamState};
pub use autoencoder::{autoencode_train, Autoencoder, Pretrained};
pub use checkpoint::{Checkpoint, NamedTensor, RNN_KIND};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use init::glorot_init;
pub use lstm::{lstm_step, LstmParams};
pub use model::{classification_accuracy, predict_score, train_classifier, SteganalysisModel, TrainOutcome};
pub use output::{bce_loss, output_score};
pub use tensor::Tensor;

/// How the per-timestep hidden states of the top layer become one vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Final,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub ae_epochs: usize,
    pub clf_epochs: usize,
    pub hidden_units: usize,
    /// LSTM layers stacked above the pretrained encoder layer.
    pub stack_layers: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub pooling: Pooling,
    pub seed: u64,
}

impl TrainConfig {
    /// Full-size recipe: 60 hidden units, 50 + 100 epochs, batches of 100.
    pub fn full_scale() -> Self {
        Self {
            ae_epochs: 50,
            clf_epochs: 100,
            hidden_units: 60,
            stack_layers: 1,
            batch_size: 100,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            pooling: Pooling::Final,
            seed: 0,
        }
    }

    /// 16 hidden units, 20 + 40 epochs, mean pooling: small enough for one core.
    pub fn desk_scale() -> Self {
        Self {
            ae_epochs: 20,
            clf_epochs: 40,
            hidden_units: 16,
            batch_size: 32,
            learning_rate: 0.01,
            pooling: Pooling::Mean,
            ..Self::full_scale()
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if self.hidden_units == 0
            || self.batch_size == 0
            || self.learning_rate <= 0.0
            || self.adam_epsilon <= 0.0
            || !in_unit(self.adam_beta1)
            || !in_unit(self.adam_beta2)
        {
            return Err(Error::Config(format!("invalid training config: {self:?}")));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk_scale()
    }
}

/// `L × 4` one-hot rows in A, C, G, T column order.
pub fn one_hot(bases: &[Base]) -> Tensor {
    let mut t = Tensor::zeros(&[bases.len(), 4]);
    for (r, b) in bases.iter().enumerate() {
        t.values[r * 4 + b.index()] = 1.0;
    }
    t
}

/// Row-wise product of one-hot rows with the trainable `4 × 4` embedding.
pub fn embed_dense(onehot: &Tensor, embedding: &Tensor) -> Result<Tensor> {
    if onehot.shape.len() != 2 || onehot.cols() != 4 || embedding.shape != [4, 4] {
        return Err(Error::Shape(format!(
            "embed_dense: {:?} × {:?}",
            onehot.shape, embedding.shape
        )));
    }
    onehot.matmul(embedding)
}

/// Embedded inputs as a flat `L × 4` buffer; equivalent to
/// `embed_dense(one_hot(bases), embedding)` without materializing the one-hot.
pub(crate) fn embed_bases(bases: &[Base], embedding: &Tensor) -> Vec<f64> {
    let mut out = Vec::with_capacity(bases.len() * 4);
    for b in bases {
        out.extend_from_slice(embedding.row(b.index()));
    }
    out
}

/// Scatters input gradients back onto the embedding rows.
pub(crate) fn embed_backward(bases: &[Base], dx: &[f64], grad: &mut Tensor) {
    for (t, b) in bases.iter().enumerate() {
        for (g, d) in grad.row_mut(b.index()).iter_mut().zip(&dx[t * 4..(t + 1) * 4]) {
            *g += d;
        }
    }
}
