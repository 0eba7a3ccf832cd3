//! Sequence-to-sequence autoencoder used to pretrain the first recurrent layer.
//!
//! The encoder LSTM reads the embedded sequence; a decoder LSTM reads the
//! encoder's hidden states and a linear readout reconstructs each one-hot
//! input. Loss is the squared reconstruction error averaged over timesteps
//! and sequences.

use rand::seq::SliceRandom;

use super::lstm::LstmParams;
use super::tensor::{flatten, matvec_into, matvec_t_acc, outer_acc, unflatten, Tensor};
use super::{adam_step, embed_backward, embed_bases, AdamState, TrainConfig};
use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::seqio::{Base, Corpus};

#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    pub embedding: Tensor,
    pub encoder: LstmParams,
    pub decoder: LstmParams,
    /// `4 × H`
    pub readout: Tensor,
    pub readout_bias: Tensor,
}

impl Autoencoder {
    pub fn init(seed: u64, hidden: usize) -> Self {
        let mut rng = substream(seed, Stream::Init, &[0]);
        let embedding = Tensor::identity(4);
        let encoder = LstmParams::init(&mut rng, 4, hidden);
        let decoder = LstmParams::init(&mut rng, hidden, hidden);
        let readout = super::init::glorot_with(&mut rng, hidden, 4);
        Self { embedding, encoder, decoder, readout, readout_bias: Tensor::zeros(&[4]) }
    }

    fn zeros_like(&self) -> Self {
        Self {
            embedding: Tensor::zeros(&self.embedding.shape),
            encoder: self.encoder.zeros_like(),
            decoder: self.decoder.zeros_like(),
            readout: Tensor::zeros(&self.readout.shape),
            readout_bias: Tensor::zeros(&self.readout_bias.shape),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.embedding];
        v.extend(self.encoder.tensors());
        v.extend(self.decoder.tensors());
        v.push(&self.readout);
        v.push(&self.readout_bias);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.embedding];
        v.extend(self.encoder.tensors_mut());
        v.extend(self.decoder.tensors_mut());
        v.push(&mut self.readout);
        v.push(&mut self.readout_bias);
        v
    }

    pub fn flat_params(&self) -> Vec<f64> {
        flatten(&self.tensors())
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        unflatten(&mut self.tensors_mut(), flat);
    }

    fn hidden(&self) -> usize {
        self.encoder.hidden_dim
    }

    /// Mean per-timestep squared reconstruction error of one sequence, and
    /// optionally its gradient scaled by `grad_scale`.
    fn sequence_loss(&self, bases: &[Base], grads: Option<(&mut Autoencoder, f64)>) -> f64 {
        let hd = self.hidden();
        let steps = bases.len();
        let inputs = embed_bases(bases, &self.embedding);
        let enc = self.encoder.forward(&inputs);
        let dec = self.decoder.forward(&enc.h);
        let mut loss = 0.0;
        let mut dout = vec![0.0; steps * 4];
        let mut recon = [0.0; 4];
        for (t, b) in bases.iter().enumerate() {
            matvec_into(&self.readout.values, hd, dec.h_at(t, hd), &mut recon);
            for k in 0..4 {
                let target = if b.index() == k { 1.0 } else { 0.0 };
                let e = recon[k] + self.readout_bias.values[k] - target;
                loss += e * e;
                dout[t * 4 + k] = 2.0 * e;
            }
        }
        let loss = loss / steps as f64;
        if let Some((g, scale)) = grads {
            let s = scale / steps as f64;
            dout.iter_mut().for_each(|v| *v *= s);
            let mut dh_dec = vec![0.0; steps * hd];
            for t in 0..steps {
                let d = &dout[t * 4..(t + 1) * 4];
                outer_acc(&mut g.readout.values, d, dec.h_at(t, hd));
                for (gb, dv) in g.readout_bias.values.iter_mut().zip(d) {
                    *gb += dv;
                }
                matvec_t_acc(&self.readout.values, hd, d, &mut dh_dec[t * hd..(t + 1) * hd]);
            }
            let dh_enc = self.decoder.backward(&dec, &dh_dec, &mut g.decoder);
            let dx = self.encoder.backward(&enc, &dh_enc, &mut g.encoder);
            embed_backward(bases, &dx, &mut g.embedding);
        }
        loss
    }

    /// Mean reconstruction loss over `batch` and its gradient.
    pub fn loss_and_grads(&self, batch: &[&[Base]]) -> (f64, Autoencoder) {
        let mut g = self.zeros_like();
        let scale = 1.0 / batch.len() as f64;
        let loss = batch.iter().map(|b| self.sequence_loss(b, Some((&mut g, scale)))).sum::<f64>() * scale;
        (loss, g)
    }

    /// Mean reconstruction loss over `seqs`.
    pub fn reconstruction_loss(&self, seqs: &[&[Base]]) -> f64 {
        seqs.iter().map(|b| self.sequence_loss(b, None)).sum::<f64>() / seqs.len() as f64
    }
}

#[derive(Clone, Debug)]
pub struct Pretrained {
    pub autoencoder: Autoencoder,
    /// Corpus-mean reconstruction loss before the first update.
    pub initial_loss: f64,
    /// Corpus-mean reconstruction loss after the last epoch.
    pub final_loss: f64,
    /// Mean training-batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

impl Pretrained {
    pub fn encoder(&self) -> &LstmParams {
        &self.autoencoder.encoder
    }
}

/// Unsupervised pretraining of the encoder on every sequence in `corpus`.
pub fn autoencode_train(corpus: &Corpus, cfg: &TrainConfig) -> Result<Pretrained> {
    if corpus.is_empty() {
        return Err(Error::Corpus("autoencoder pretraining needs a non-empty corpus".into()));
    }
    cfg.validate()?;
    let seqs: Vec<&[Base]> = corpus.sequences.iter().map(|s| s.bases()).collect();
    let mut ae = Autoencoder::init(cfg.seed, cfg.hidden_units);
    let initial_loss = ae.reconstruction_loss(&seqs);
    let adam = cfg.adam();
    let mut state = AdamState::for_params(&ae.tensors_mut());
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.ae_epochs);

    for epoch in 0..cfg.ae_epochs {
        order.shuffle(&mut substream(cfg.seed, Stream::Shuffle, &[0, epoch as u64]));
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&[Base]> = chunk.iter().map(|&i| seqs[i]).collect();
            let (loss, grads) = ae.loss_and_grads(&batch);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            adam_step(&mut ae.tensors_mut(), &grads.tensors(), &mut state, &adam)?;
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        if !ae.tensors().iter().all(|t| t.is_finite()) {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        epoch_losses.push(mean);
    }
    let final_loss = ae.reconstruction_loss(&seqs);
    Ok(Pretrained { autoencoder: ae, initial_loss, final_loss, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradient_check;
    use crate::seqio::{parse_bases, DnaSequence, Label, Source, Split};

    #[test]
    fn gradients_match_finite_differences() {
        let ae = Autoencoder::init(4, 3);
        let a = parse_bases("ACGTA").unwrap();
        let b = parse_bases("TTGCA").unwrap();
        let batch: Vec<&[Base]> = vec![&a, &b];
        let (_, g) = ae.loss_and_grads(&batch);
        let theta = ae.flat_params();
        let mut probe = ae.clone();
        let report = gradient_check(
            &theta,
            &flatten(&g.tensors()),
            |p| {
                probe.set_flat_params(p);
                probe.reconstruction_loss(&batch)
            },
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    fn constant_corpus() -> Corpus {
        let seqs = (0..8)
            .map(|i| DnaSequence::new(format!("a{i}"), vec![Base::A; 20], Label::Intron).unwrap())
            .collect();
        Corpus::new(seqs, Split::Train, Source::Synthetic)
    }

    #[test]
    fn learns_a_constant_corpus() {
        let cfg = TrainConfig { ae_epochs: 150, batch_size: 4, learning_rate: 0.02, ..TrainConfig::desk_scale() };
        let out = autoencode_train(&constant_corpus(), &cfg).unwrap();
        assert!(out.final_loss < 0.01 * out.initial_loss, "{} vs {}", out.final_loss, out.initial_loss);
    }

    #[test]
    fn zero_epochs_and_determinism() {
        let cfg = TrainConfig { ae_epochs: 0, ..TrainConfig::desk_scale() };
        let out = autoencode_train(&constant_corpus(), &cfg).unwrap();
        assert_eq!(out.autoencoder, Autoencoder::init(cfg.seed, cfg.hidden_units));
        assert_eq!(out.initial_loss, out.final_loss);

        let cfg = TrainConfig { ae_epochs: 3, seed: 17, ..TrainConfig::desk_scale() };
        let a = autoencode_train(&constant_corpus(), &cfg).unwrap();
        let b = autoencode_train(&constant_corpus(), &cfg).unwrap();
        assert_eq!(a.autoencoder, b.autoencoder);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let empty = Corpus::new(vec![], Split::Train, Source::Synthetic);
        assert!(autoencode_train(&empty, &TrainConfig::default()).is_err());
    }
}
