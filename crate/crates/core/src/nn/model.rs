//! Supervised intron/exon classifier: embedding → pretrained encoder LSTM →
//! stacked LSTMs → pooled hidden state → `K × H` output weights → batch
//! normalization → normalized sigmoid. Class 1 is intron.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::autoencoder::Pretrained;
use super::init::glorot_with;
use super::lstm::{LstmParams, LstmTrace};
use super::output::{bce_grad, bce_loss, normalized_sigmoid, normalized_sigmoid_backward, BatchNorm, BatchNormCache};
use super::tensor::{flatten, matvec_into, matvec_t_acc, outer_acc, unflatten, Tensor};
use super::{embed_backward, embed_bases, Pooling, TrainConfig};
use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::seqio::{Base, Corpus};

pub const CLASSES: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteganalysisModel {
    pub embedding: Tensor,
    pub encoder: LstmParams,
    pub stack: Vec<LstmParams>,
    /// `K × H`, row k scores class k.
    pub output_weights: Tensor,
    pub norm_stats: BatchNorm,
    pub hyper: TrainConfig,
}

/// Gradients for every trainable tensor of [`SteganalysisModel`].
#[derive(Clone, Debug)]
pub struct ModelGrads {
    pub embedding: Tensor,
    pub encoder: LstmParams,
    pub stack: Vec<LstmParams>,
    pub output_weights: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl ModelGrads {
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.embedding];
        v.extend(self.encoder.tensors());
        for l in &self.stack {
            v.extend(l.tensors());
        }
        v.push(&self.output_weights);
        v.push(&self.gamma);
        v.push(&self.beta);
        v
    }
}

/// Whether the output normalization uses the batch's own statistics
/// (training) or the stored running statistics (inference).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    Batch,
    Running,
}

struct Forward {
    enc: LstmTrace,
    stack: Vec<LstmTrace>,
    pooled: Vec<f64>,
    logits: Vec<f64>,
}

/// Final or mean hidden state of a `T × H` sequence.
fn pool(h: &[f64], hd: usize, pooling: Pooling) -> Vec<f64> {
    let steps = h.len() / hd;
    match pooling {
        Pooling::Final => h[(steps - 1) * hd..].to_vec(),
        Pooling::Mean => {
            let mut m = vec![0.0; hd];
            for row in h.chunks_exact(hd) {
                for (a, b) in m.iter_mut().zip(row) {
                    *a += b / steps as f64;
                }
            }
            m
        }
    }
}

impl SteganalysisModel {
    /// Fresh model. When `pretrained` is given its embedding and encoder
    /// seed the first recurrent layer; otherwise they are initialized here.
    pub fn init(cfg: &TrainConfig, pretrained: Option<&Pretrained>) -> Result<Self> {
        cfg.validate()?;
        let hd = cfg.hidden_units;
        let mut rng = substream(cfg.seed, Stream::Init, &[1]);
        let (embedding, encoder) = match pretrained {
            Some(p) => {
                let enc = p.encoder().clone();
                if enc.input_dim != 4 || enc.hidden_dim != hd {
                    return Err(Error::Shape(format!(
                        "pretrained encoder is {}→{}, config wants 4→{hd}",
                        enc.input_dim, enc.hidden_dim
                    )));
                }
                (p.autoencoder.embedding.clone(), enc)
            }
            None => (Tensor::identity(4), LstmParams::init(&mut rng, 4, hd)),
        };
        let stack = (0..cfg.stack_layers).map(|_| LstmParams::init(&mut rng, hd, hd)).collect();
        let output_weights = glorot_with(&mut rng, hd, CLASSES);
        Ok(Self {
            embedding,
            encoder,
            stack,
            output_weights,
            norm_stats: BatchNorm::new(CLASSES),
            hyper: cfg.clone(),
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.hidden_dim
    }

    pub fn trainable(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.embedding];
        v.extend(self.encoder.tensors());
        for l in &self.stack {
            v.extend(l.tensors());
        }
        v.push(&self.output_weights);
        v.push(&self.norm_stats.gamma);
        v.push(&self.norm_stats.beta);
        v
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.embedding];
        v.extend(self.encoder.tensors_mut());
        for l in &mut self.stack {
            v.extend(l.tensors_mut());
        }
        v.push(&mut self.output_weights);
        v.push(&mut self.norm_stats.gamma);
        v.push(&mut self.norm_stats.beta);
        v
    }

    pub fn flat_params(&self) -> Vec<f64> {
        flatten(&self.trainable())
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        unflatten(&mut self.trainable_mut(), flat);
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.trainable().iter().all(|t| t.is_finite())
            && self.norm_stats.running_mean.is_finite()
            && self.norm_stats.running_var.is_finite()
    }

    fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            embedding: Tensor::zeros(&[4, 4]),
            encoder: self.encoder.zeros_like(),
            stack: self.stack.iter().map(|l| l.zeros_like()).collect(),
            output_weights: Tensor::zeros(&self.output_weights.shape),
            gamma: Tensor::zeros(&[CLASSES]),
            beta: Tensor::zeros(&[CLASSES]),
        }
    }

    fn forward(&self, bases: &[Base]) -> Forward {
        let hd = self.hidden_dim();
        let enc = self.encoder.forward(&embed_bases(bases, &self.embedding));
        let mut stack: Vec<LstmTrace> = Vec::with_capacity(self.stack.len());
        for layer in &self.stack {
            let input = stack.last().map_or(&enc.h, |t| &t.h);
            let tr = layer.forward(input);
            stack.push(tr);
        }
        let top = stack.last().unwrap_or(&enc);
        let pooled = pool(&top.h, hd, self.hyper.pooling);
        let mut logits = vec![0.0; CLASSES];
        matvec_into(&self.output_weights.values, hd, &pooled, &mut logits);
        Forward { enc, stack, pooled, logits }
    }

    fn backward(&self, bases: &[Base], fw: &Forward, dlogits: &[f64], g: &mut ModelGrads) {
        let hd = self.hidden_dim();
        outer_acc(&mut g.output_weights.values, dlogits, &fw.pooled);
        let mut dpooled = vec![0.0; hd];
        matvec_t_acc(&self.output_weights.values, hd, dlogits, &mut dpooled);

        let steps = fw.enc.steps;
        let mut dh = vec![0.0; steps * hd];
        match self.hyper.pooling {
            Pooling::Final => dh[(steps - 1) * hd..].copy_from_slice(&dpooled),
            Pooling::Mean => {
                for t in 0..steps {
                    for (d, p) in dh[t * hd..(t + 1) * hd].iter_mut().zip(&dpooled) {
                        *d = p / steps as f64;
                    }
                }
            }
        }
        for (l, layer) in self.stack.iter().enumerate().rev() {
            dh = layer.backward(&fw.stack[l], &dh, &mut g.stack[l]);
        }
        let dx = self.encoder.backward(&fw.enc, &dh, &mut g.encoder);
        embed_backward(bases, &dx, &mut g.embedding);
    }

    /// Replaces the running normalization statistics with the exact logit
    /// mean and variance over `seqs` under the current weights. The loss is
    /// invariant to shifting the logits, so their mean drifts freely during
    /// training and a moving average lags behind it.
    pub fn recompute_norm_stats<'a>(&mut self, seqs: impl Iterator<Item = &'a [Base]>) {
        let logits: Vec<Vec<f64>> = seqs.map(|b| self.logits(b)).collect();
        let (_, _, mean, var) = self.norm_stats.forward_batch(&logits);
        self.norm_stats.running_mean.values = mean;
        self.norm_stats.running_var.values = var;
    }

    /// Output-layer logits before normalization; identical to the training
    /// forward pass but without keeping a trace.
    pub fn logits(&self, bases: &[Base]) -> Vec<f64> {
        let hd = self.hidden_dim();
        let mut h = self.encoder.hidden_states(&embed_bases(bases, &self.embedding));
        for layer in &self.stack {
            h = layer.hidden_states(&h);
        }
        let pooled = pool(&h, hd, self.hyper.pooling);
        let mut logits = vec![0.0; CLASSES];
        matvec_into(&self.output_weights.values, hd, &pooled, &mut logits);
        logits
    }

    /// Class probabilities for one sequence using running statistics.
    pub fn class_probabilities(&self, bases: &[Base]) -> Result<Vec<f64>> {
        if bases.is_empty() {
            return Err(Error::InvalidSequence("cannot score an empty sequence".into()));
        }
        Ok(normalized_sigmoid(&self.norm_stats.infer(&self.logits(bases))))
    }

    /// Mean cross-entropy of a labeled batch and, when `with_grads`, its gradient.
    /// In [`NormMode::Batch`] also returns the batch mean/variance of the logits.
    pub fn batch_loss(
        &self,
        batch: &[(&[Base], u8)],
        mode: NormMode,
        with_grads: bool,
    ) -> (f64, Option<ModelGrads>, Option<(Vec<f64>, Vec<f64>)>) {
        let fws: Vec<Forward> = batch.iter().map(|(b, _)| self.forward(b)).collect();
        let logits: Vec<Vec<f64>> = fws.iter().map(|f| f.logits.clone()).collect();
        let labels: Vec<u8> = batch.iter().map(|&(_, y)| y).collect();
        let bn = &self.norm_stats;
        let (normed, cache, stats): (Vec<Vec<f64>>, Option<BatchNormCache>, _) = match mode {
            NormMode::Batch => {
                let (out, cache, mean, var) = bn.forward_batch(&logits);
                (out, Some(cache), Some((mean, var)))
            }
            NormMode::Running => (logits.iter().map(|z| bn.infer(z)).collect(), None, None),
        };
        let probs: Vec<f64> = normed.iter().map(|z| normalized_sigmoid(z)[1]).collect();
        let loss = bce_loss(&probs, &labels).unwrap_or(f64::NAN);
        if !with_grads {
            return (loss, None, stats);
        }

        let mut g = self.zero_grads();
        let dprob = bce_grad(&probs, &labels);
        let dnormed: Vec<Vec<f64>> = normed
            .iter()
            .zip(&dprob)
            .map(|(z, &dp)| normalized_sigmoid_backward(z, &[0.0, dp]))
            .collect();
        let dlogits: Vec<Vec<f64>> = match &cache {
            Some(cache) => bn.backward_batch(cache, &dnormed, &mut g.gamma, &mut g.beta),
            None => dnormed
                .iter()
                .zip(&logits)
                .map(|(dy, z)| {
                    (0..CLASSES)
                        .map(|k| {
                            let inv = 1.0 / (bn.running_var.values[k] + bn.eps).sqrt();
                            let xhat = (z[k] - bn.running_mean.values[k]) * inv;
                            g.gamma.values[k] += dy[k] * xhat;
                            g.beta.values[k] += dy[k];
                            dy[k] * bn.gamma.values[k] * inv
                        })
                        .collect()
                })
                .collect(),
        };
        for ((&(bases, _), fw), dl) in batch.iter().zip(&fws).zip(&dlogits) {
            self.backward(bases, fw, dl, &mut g);
        }
        (loss, Some(g), stats)
    }
}

/// Intron-class score `Pr(y=1 | h)` of one sequence.
pub fn predict_score(model: &SteganalysisModel, bases: &[Base]) -> Result<f64> {
    Ok(model.class_probabilities(bases)?[1])
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: SteganalysisModel,
    /// Mean training-batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

fn labeled(corpus: &Corpus) -> Result<Vec<(&[Base], u8)>> {
    corpus.ensure_labeled()?;
    Ok(corpus
        .sequences
        .iter()
        .filter_map(|s| s.label.class().map(|y| (s.bases(), y)))
        .collect())
}

/// Supervised fine-tuning with Adam. Batches of one fall back to running
/// normalization statistics (a single logit has no batch variance).
pub fn train_classifier(corpus: &Corpus, pretrained: Option<&Pretrained>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let data = labeled(corpus)?;
    let mut model = SteganalysisModel::init(cfg, pretrained)?;
    let adam = cfg.adam();
    let mut state = AdamState::for_params(&model.trainable_mut());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.clf_epochs);

    for epoch in 0..cfg.clf_epochs {
        order.shuffle(&mut substream(cfg.seed, Stream::Shuffle, &[1, epoch as u64]));
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[Base], u8)> = chunk.iter().map(|&i| data[i]).collect();
            let mode = if batch.len() > 1 { NormMode::Batch } else { NormMode::Running };
            let (loss, grads, stats) = model.batch_loss(&batch, mode, true);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            let grads = grads.expect("gradients requested");
            adam_step(&mut model.trainable_mut(), &grads.tensors(), &mut state, &adam)?;
            if let Some((mean, var)) = stats {
                model.norm_stats.update_running(&mean, &var);
            }
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        if !model.is_finite() {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        epoch_losses.push(mean);
    }
    if cfg.clf_epochs > 0 && data.len() > 1 {
        model.recompute_norm_stats(data.iter().map(|&(b, _)| b));
    }
    Ok(TrainOutcome { model, epoch_losses })
}

/// Fraction of labeled sequences whose thresholded score (0.5) matches the label.
pub fn classification_accuracy(model: &SteganalysisModel, corpus: &Corpus) -> Result<f64> {
    let data = labeled(corpus)?;
    let mut correct = 0usize;
    for (bases, y) in &data {
        let p = predict_score(model, bases)?;
        if (p > 0.5) == (*y == 1) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradient_check;
    use crate::seqio::{parse_bases, DnaSequence, Label, Source, Split};

    fn tiny_cfg(pooling: Pooling) -> TrainConfig {
        TrainConfig { hidden_units: 2, stack_layers: 1, seed: 21, pooling, ..TrainConfig::desk_scale() }
    }

    /// Perturbs biases and peepholes away from their structured init so no
    /// gradient entry is trivially zero.
    fn jitter(model: &mut SteganalysisModel) {
        let mut theta = model.flat_params();
        for (k, v) in theta.iter_mut().enumerate() {
            *v += 0.3 * ((k as f64 * 0.7).sin());
        }
        model.set_flat_params(&theta);
    }

    fn check(model: &SteganalysisModel, batch: &[(&[Base], u8)], mode: NormMode) -> f64 {
        let (_, g, _) = model.batch_loss(batch, mode, true);
        let analytic = flatten(&g.unwrap().tensors());
        let mut probe = model.clone();
        let report = gradient_check(
            &model.flat_params(),
            &analytic,
            |p| {
                probe.set_flat_params(p);
                probe.batch_loss(batch, mode, false).0
            },
            1e-4,
        )
        .unwrap();
        report.max_rel_error
    }

    #[test]
    fn full_model_gradients() {
        let a = parse_bases("ACG").unwrap();
        let b = parse_bases("TTA").unwrap();
        let c = parse_bases("GCA").unwrap();
        let batch: Vec<(&[Base], u8)> = vec![(&a, 1), (&b, 0), (&c, 1)];
        for pooling in [Pooling::Final, Pooling::Mean] {
            let mut m = SteganalysisModel::init(&tiny_cfg(pooling), None).unwrap();
            jitter(&mut m);
            assert!(m.parameter_count() <= 500);
            let err = check(&m, &batch, NormMode::Batch);
            assert!(err < 1e-4, "{pooling:?} batch-norm mode: {err}");
            let err = check(&m, &batch[..1], NormMode::Running);
            assert!(err < 1e-4, "{pooling:?} running mode: {err}");
        }
    }

    #[test]
    fn inference_matches_training_forward() {
        for pooling in [Pooling::Final, Pooling::Mean] {
            let mut m = SteganalysisModel::init(&TrainConfig { pooling, ..TrainConfig::desk_scale() }, None).unwrap();
            jitter(&mut m);
            let s = parse_bases("ACGTTGCAAGTCCGATAGGC").unwrap();
            assert_eq!(m.logits(&s), m.forward(&s).logits);
        }
    }

    #[test]
    fn symmetric_output_scores_half() {
        let mut m = SteganalysisModel::init(&TrainConfig::desk_scale(), None).unwrap();
        let row = m.output_weights.row(0).to_vec();
        m.output_weights.row_mut(1).copy_from_slice(&row);
        for s in ["A", "ACGTTGCA", "TTTTTTTTTTTT"] {
            assert_eq!(predict_score(&m, &parse_bases(s).unwrap()).unwrap(), 0.5);
        }
        assert!(predict_score(&m, &[]).is_err());
    }

    fn two_chain_corpus() -> Corpus {
        let mut seqs = Vec::new();
        for i in 0..16 {
            seqs.push(DnaSequence::new(format!("i{i}"), vec![Base::A; 12], Label::Intron).unwrap());
            seqs.push(DnaSequence::new(format!("e{i}"), vec![Base::T; 12], Label::Exon).unwrap());
        }
        Corpus::new(seqs, Split::Train, Source::Synthetic)
    }

    #[test]
    fn separates_constant_chains() {
        let cfg = TrainConfig { clf_epochs: 30, batch_size: 8, ..TrainConfig::desk_scale() };
        let out = train_classifier(&two_chain_corpus(), None, &cfg).unwrap();
        assert!(out.epoch_losses.last() < out.epoch_losses.first());
        assert_eq!(classification_accuracy(&out.model, &two_chain_corpus()).unwrap(), 1.0);
        assert!(predict_score(&out.model, &[Base::A; 12]).unwrap() > 0.85);
        assert!(predict_score(&out.model, &[Base::T; 12]).unwrap() < 0.15);
        // Inference normalization uses the exact statistics of the final logits.
        let m = &out.model;
        let za = m.logits(&[Base::A; 12]);
        let zt = m.logits(&[Base::T; 12]);
        for k in 0..CLASSES {
            let mean = 0.5 * (za[k] + zt[k]);
            assert!((m.norm_stats.running_mean.values[k] - mean).abs() < 1e-12);
            assert!((m.norm_stats.running_var.values[k] - 0.25 * (za[k] - zt[k]).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_zero_epoch_behaviour() {
        let cfg = TrainConfig { clf_epochs: 2, batch_size: 5, ..TrainConfig::desk_scale() };
        let a = train_classifier(&two_chain_corpus(), None, &cfg).unwrap();
        let b = train_classifier(&two_chain_corpus(), None, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.final_loss(), b.final_loss());

        let zero = TrainConfig { clf_epochs: 0, ..cfg };
        let z = train_classifier(&two_chain_corpus(), None, &zero).unwrap();
        assert_eq!(z.model, SteganalysisModel::init(&zero, None).unwrap());
    }

    #[test]
    fn single_class_corpus_is_rejected() {
        let seqs = vec![DnaSequence::new("a", vec![Base::A; 5], Label::Intron).unwrap()];
        let c = Corpus::new(seqs, Split::Train, Source::Synthetic);
        assert!(train_classifier(&c, None, &TrainConfig::default()).is_err());
    }
}
