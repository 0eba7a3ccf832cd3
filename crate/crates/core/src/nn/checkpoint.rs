//! Versioned JSON checkpoints: a hyperparameter record plus every tensor as
//! `{name, shape, values}`. Floats are written in shortest round-trip form,
//! so a reloaded model scores bit-identically.

use std::collections::BTreeMap;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::lstm::LstmParams;
use super::model::SteganalysisModel;
use super::output::BatchNorm;
use super::tensor::Tensor;
use super::TrainConfig;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// On-disk layout shared by the recurrent model and the baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<H> {
    pub format_version: u32,
    pub kind: String,
    pub hyper: H,
    pub tensors: Vec<NamedTensor>,
}

impl<H: Serialize + DeserializeOwned> Checkpoint<H> {
    pub fn new(kind: &str, hyper: H) -> Self {
        Self { format_version: FORMAT_VERSION, kind: kind.into(), hyper, tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: &Tensor) {
        self.tensors.push(NamedTensor { name: name.into(), shape: t.shape.clone(), values: t.values.clone() });
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and checks the format version, accepting any kind.
    pub fn parse(s: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(s)?;
        if ck.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                ck.format_version
            )));
        }
        Ok(ck)
    }

    pub fn from_json(s: &str, expected_kind: &str) -> Result<Self> {
        let ck = Self::parse(s)?;
        if ck.kind != expected_kind {
            return Err(Error::Checkpoint(format!("checkpoint holds `{}`, expected `{expected_kind}`", ck.kind)));
        }
        Ok(ck)
    }

    pub fn tensor_map(&self) -> Result<TensorMap> {
        let mut map = BTreeMap::new();
        for t in &self.tensors {
            let tensor = Tensor::from_vec(&t.shape, t.values.clone())
                .map_err(|e| Error::Checkpoint(format!("tensor `{}`: {e}", t.name)))?;
            if map.insert(t.name.clone(), tensor).is_some() {
                return Err(Error::Checkpoint(format!("duplicate tensor `{}`", t.name)));
            }
        }
        Ok(TensorMap(map))
    }
}

pub struct TensorMap(BTreeMap<String, Tensor>);

impl TensorMap {
    pub fn take(&mut self, name: &str, shape: &[usize]) -> Result<Tensor> {
        let t = self.0.remove(name).ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
        if t.shape != shape {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` has shape {:?}, expected {shape:?}",
                t.shape
            )));
        }
        Ok(t)
    }

    pub fn finish(self) -> Result<()> {
        match self.0.keys().next() {
            Some(extra) => Err(Error::Checkpoint(format!("unexpected tensor `{extra}`"))),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnHyper {
    pub train: TrainConfig,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

pub const RNN_KIND: &str = "rnn";

fn push_lstm<H: Serialize + DeserializeOwned>(ck: &mut Checkpoint<H>, prefix: &str, p: &LstmParams) {
    for (name, t) in LstmParams::TENSOR_NAMES.iter().zip(p.tensors()) {
        ck.push(format!("{prefix}.{name}"), t);
    }
}

fn take_lstm(map: &mut TensorMap, prefix: &str, input: usize, hidden: usize) -> Result<LstmParams> {
    let mut p = LstmParams::zeros(input, hidden);
    let shapes: Vec<Vec<usize>> = p.tensors().iter().map(|t| t.shape.clone()).collect();
    for ((name, t), shape) in LstmParams::TENSOR_NAMES.iter().zip(p.tensors_mut()).zip(shapes) {
        *t = map.take(&format!("{prefix}.{name}"), &shape)?;
    }
    Ok(p)
}

impl SteganalysisModel {
    pub fn to_checkpoint(&self) -> Checkpoint<RnnHyper> {
        let hyper = RnnHyper {
            train: self.hyper.clone(),
            input_dim: self.encoder.input_dim,
            hidden_dim: self.hidden_dim(),
            bn_eps: self.norm_stats.eps,
            bn_momentum: self.norm_stats.momentum,
        };
        let mut ck = Checkpoint::new(RNN_KIND, hyper);
        ck.push("embedding", &self.embedding);
        push_lstm(&mut ck, "encoder", &self.encoder);
        for (i, layer) in self.stack.iter().enumerate() {
            push_lstm(&mut ck, &format!("stack.{i}"), layer);
        }
        ck.push("output_weights", &self.output_weights);
        ck.push("norm.gamma", &self.norm_stats.gamma);
        ck.push("norm.beta", &self.norm_stats.beta);
        ck.push("norm.running_mean", &self.norm_stats.running_mean);
        ck.push("norm.running_var", &self.norm_stats.running_var);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint<RnnHyper>) -> Result<Self> {
        let h = &ck.hyper;
        let hd = h.hidden_dim;
        let mut map = ck.tensor_map()?;
        let embedding = map.take("embedding", &[4, 4])?;
        let encoder = take_lstm(&mut map, "encoder", h.input_dim, hd)?;
        let stack = (0..h.train.stack_layers)
            .map(|i| take_lstm(&mut map, &format!("stack.{i}"), hd, hd))
            .collect::<Result<Vec<_>>>()?;
        let output_weights = map.take("output_weights", &[super::model::CLASSES, hd])?;
        let k = super::model::CLASSES;
        let norm_stats = BatchNorm {
            gamma: map.take("norm.gamma", &[k])?,
            beta: map.take("norm.beta", &[k])?,
            running_mean: map.take("norm.running_mean", &[k])?,
            running_var: map.take("norm.running_var", &[k])?,
            eps: h.bn_eps,
            momentum: h.bn_momentum,
        };
        if norm_stats.running_var.values.iter().any(|&v| v < 0.0) {
            return Err(Error::Checkpoint("negative running variance".into()));
        }
        map.finish()?;
        Ok(Self { embedding, encoder, stack, output_weights, norm_stats, hyper: h.train.clone() })
    }

    pub fn to_json(&self) -> Result<String> {
        self.to_checkpoint().to_json()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::from_json(s, RNN_KIND)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::predict_score;
    use crate::seqio::parse_bases;

    #[test]
    fn reload_scores_bit_identically() {
        let mut m = SteganalysisModel::init(&TrainConfig { seed: 8, ..Default::default() }, None).unwrap();
        m.norm_stats.running_mean.values = vec![0.123456789012345, -1.0 / 3.0];
        m.norm_stats.running_var.values = vec![std::f64::consts::PI, 0.1 + 0.2];
        let json = m.to_json().unwrap();
        let back = SteganalysisModel::from_json(&json).unwrap();
        assert_eq!(back, m);
        let s = parse_bases("ACGTTGACCAGTAGGAT").unwrap();
        assert_eq!(
            predict_score(&m, &s).unwrap().to_bits(),
            predict_score(&back, &s).unwrap().to_bits()
        );
        assert!(json.contains("\"format_version\": 1"));
    }

    #[test]
    fn rejects_bad_checkpoints() {
        let m = SteganalysisModel::init(&TrainConfig::default(), None).unwrap();
        let mut ck = m.to_checkpoint();
        ck.format_version = 9;
        assert!(SteganalysisModel::from_json(&ck.to_json().unwrap()).is_err());

        let mut ck = m.to_checkpoint();
        ck.tensors.retain(|t| t.name != "norm.beta");
        assert!(SteganalysisModel::from_json(&ck.to_json().unwrap()).is_err());

        let mut ck = m.to_checkpoint();
        ck.tensors[0].shape = vec![2, 8];
        assert!(SteganalysisModel::from_json(&ck.to_json().unwrap()).is_err());
    }
}
