//! Comparison classifiers over k-mer frequency features: a linear SVM,
//! AdaBoost with decision stumps, a random forest, and the χ² frequency test.
//!
//! Every trained baseline is also a [`Scorer`], so it calibrates and flags
//! suspects through the same deviation-band rule as the recurrent model.

mod boost;
mod forest;
mod svm;

pub use boost::{train_adaboost, AdaBoostModel, Stump};
pub use forest::{gini, train_forest, ForestConfig, ForestModel, Node, Tree};
pub use svm::{train_svm, SvmConfig, SvmModel};

use serde::{Deserialize, Serialize};

use crate::detector::Scorer;
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, Tensor};
use crate::seqio::Base;

/// k-mer counts (or frequencies) in lexicographic k-mer order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub k: usize,
    pub normalized: bool,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Index of a k-mer in lexicographic order over `ACGT`.
pub fn kmer_index(kmer: &[Base]) -> usize {
    kmer.iter().fold(0, |acc, b| acc * 4 + b.index())
}

pub fn kmer_features(seq: &[Base], k: usize, normalize: bool) -> Result<FeatureVector> {
    if k == 0 || k > seq.len() || k > 12 {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in 1..={} for a sequence of length {}",
            seq.len().min(12),
            seq.len()
        )));
    }
    let mut values = vec![0.0; 1 << (2 * k)];
    for w in seq.windows(k) {
        values[kmer_index(w)] += 1.0;
    }
    if normalize {
        let n = (seq.len() - k + 1) as f64;
        values.iter_mut().for_each(|v| *v /= n);
    }
    Ok(FeatureVector { values, k, normalized: normalize })
}

/// Pearson's statistic `Σ (o − e)² / e`. Cells where both are zero are
/// skipped; an observation against a zero expectation is an error.
pub fn chi_square_stat(observed: &FeatureVector, expected: &FeatureVector) -> Result<f64> {
    if observed.dim() != expected.dim() {
        return Err(Error::Shape(format!("observed has {} cells, expected {}", observed.dim(), expected.dim())));
    }
    let mut stat = 0.0;
    for (i, (&o, &e)) in observed.values.iter().zip(&expected.values).enumerate() {
        if e > 0.0 {
            stat += (o - e) * (o - e) / e;
        } else if o != 0.0 || e < 0.0 {
            return Err(Error::InvalidArgument(format!("expected count in cell {i} is {e}")));
        }
    }
    Ok(stat)
}

/// Checks a labeled training set and returns its feature dimension.
fn check_training_set(features: &[FeatureVector], labels: &[u8]) -> Result<usize> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::Training(format!(
            "{} feature vectors for {} labels",
            features.len(),
            labels.len()
        )));
    }
    let dim = features[0].dim();
    if features.iter().any(|f| f.dim() != dim) {
        return Err(Error::Shape("feature vectors differ in dimension".into()));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Training("labels must be 0 or 1".into()));
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::Training("both classes must be present".into()));
    }
    Ok(dim)
}

fn sign(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Nearest-profile χ² detector: one expected k-mer frequency profile per class.
#[derive(Clone, Debug, PartialEq)]
pub struct ChiSquareModel {
    pub intron_profile: FeatureVector,
    pub exon_profile: FeatureVector,
}

/// Small additive smoothing that keeps every expected cell positive.
const PROFILE_SMOOTHING: f64 = 1e-3;

pub fn train_chisquare(features: &[FeatureVector], labels: &[u8]) -> Result<ChiSquareModel> {
    let dim = check_training_set(features, labels)?;
    let profile = |class: u8| {
        let mut acc = vec![0.0; dim];
        let mut n = 0.0f64;
        for (f, _) in features.iter().zip(labels).filter(|(_, &l)| l == class) {
            let total: f64 = f.values.iter().sum();
            if total > 0.0 {
                acc.iter_mut().zip(&f.values).for_each(|(a, v)| *a += v / total);
                n += 1.0;
            }
        }
        let values = acc.iter().map(|a| (a / n.max(1.0) + PROFILE_SMOOTHING / dim as f64) / (1.0 + PROFILE_SMOOTHING)).collect();
        FeatureVector { values, k: features[0].k, normalized: true }
    };
    Ok(ChiSquareModel { intron_profile: profile(1), exon_profile: profile(0) })
}

impl ChiSquareModel {
    /// `χ²_exon / (χ²_intron + χ²_exon)` on frequencies: above one half when
    /// the sample sits closer to the intron profile.
    pub fn score(&self, features: &FeatureVector) -> Result<f64> {
        let total: f64 = features.values.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("empty k-mer profile".into()));
        }
        let freq = FeatureVector { values: features.values.iter().map(|v| v / total).collect(), ..features.clone() };
        let ci = chi_square_stat(&freq, &self.intron_profile)?;
        let ce = chi_square_stat(&freq, &self.exon_profile)?;
        Ok(if ci + ce == 0.0 { 0.5 } else { ce / (ci + ce) })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Svm,
    Adaboost,
    Forest,
    Chisquare,
}

impl BaselineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Svm => "svm",
            BaselineKind::Adaboost => "adaboost",
            BaselineKind::Forest => "forest",
            BaselineKind::Chisquare => "chisquare",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BaselineModel {
    Svm(SvmModel),
    AdaBoost(AdaBoostModel),
    Forest(ForestModel),
    ChiSquare(ChiSquareModel),
}

impl BaselineModel {
    pub fn kind(&self) -> BaselineKind {
        match self {
            BaselineModel::Svm(_) => BaselineKind::Svm,
            BaselineModel::AdaBoost(_) => BaselineKind::Adaboost,
            BaselineModel::Forest(_) => BaselineKind::Forest,
            BaselineModel::ChiSquare(_) => BaselineKind::Chisquare,
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            BaselineModel::Svm(m) => Some(m.weights.len()),
            BaselineModel::ChiSquare(m) => Some(m.intron_profile.dim()),
            BaselineModel::AdaBoost(_) | BaselineModel::Forest(_) => None,
        }
    }
}

/// Predicted class (1 = intron) and real-valued score: the SVM margin, the
/// boosted vote sum, the forest vote fraction, or the χ² distance ratio.
pub fn baseline_predict(model: &BaselineModel, features: &FeatureVector) -> Result<(u8, f64)> {
    if let Some(d) = model.dim() {
        if d != features.dim() {
            return Err(Error::Shape(format!("model expects {d} features, got {}", features.dim())));
        }
    }
    let x = &features.values;
    Ok(match model {
        BaselineModel::Svm(m) => {
            let s = m.margin(x);
            (u8::from(s > 0.0), s)
        }
        BaselineModel::AdaBoost(m) => {
            let s = m.vote(x)?;
            (u8::from(s > 0.0), s)
        }
        BaselineModel::Forest(m) => {
            let s = m.vote_fraction(x)?;
            (u8::from(s > 0.5), s)
        }
        BaselineModel::ChiSquare(m) => {
            let s = m.score(features)?;
            (u8::from(s > 0.5), s)
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub k: usize,
    pub normalize: bool,
    pub svm_epochs: usize,
    pub svm_learning_rate: f64,
    pub svm_regularization: f64,
    pub adaboost_rounds: usize,
    pub forest_trees: usize,
    pub forest_max_depth: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            k: 3,
            normalize: true,
            svm_epochs: 50,
            svm_learning_rate: 0.01,
            svm_regularization: 1e-3,
            adaboost_rounds: 50,
            forest_trees: 25,
            forest_max_depth: 6,
            seed: 0,
        }
    }
}

/// A trained baseline together with the feature extraction it expects.
#[derive(Clone, Debug, PartialEq)]
pub struct Baseline {
    pub k: usize,
    pub normalize: bool,
    pub model: BaselineModel,
}

impl Baseline {
    pub fn train(kind: BaselineKind, seqs: &[&[Base]], labels: &[u8], cfg: &BaselineConfig) -> Result<Self> {
        let features = seqs
            .iter()
            .map(|s| kmer_features(s, cfg.k, cfg.normalize))
            .collect::<Result<Vec<_>>>()?;
        let model = match kind {
            BaselineKind::Svm => BaselineModel::Svm(train_svm(
                &features,
                labels,
                &SvmConfig {
                    epochs: cfg.svm_epochs,
                    learning_rate: cfg.svm_learning_rate,
                    regularization: cfg.svm_regularization,
                    seed: cfg.seed,
                },
            )?),
            BaselineKind::Adaboost => BaselineModel::AdaBoost(train_adaboost(&features, labels, cfg.adaboost_rounds)?),
            BaselineKind::Forest => BaselineModel::Forest(train_forest(
                &features,
                labels,
                &ForestConfig { n_trees: cfg.forest_trees, max_depth: cfg.forest_max_depth, seed: cfg.seed },
            )?),
            BaselineKind::Chisquare => BaselineModel::ChiSquare(train_chisquare(&features, labels)?),
        };
        Ok(Self { k: cfg.k, normalize: cfg.normalize, model })
    }

    pub fn predict(&self, seq: &[Base]) -> Result<(u8, f64)> {
        baseline_predict(&self.model, &kmer_features(seq, self.k, self.normalize)?)
    }
}

impl Scorer for Baseline {
    fn score(&self, bases: &[Base]) -> Result<f64> {
        Ok(self.predict(bases)?.1)
    }

    fn decision_threshold(&self) -> f64 {
        match self.model {
            BaselineModel::Svm(_) | BaselineModel::AdaBoost(_) => 0.0,
            BaselineModel::Forest(_) | BaselineModel::ChiSquare(_) => 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineHyper {
    pub k: usize,
    pub normalize: bool,
}

fn vector(shape_len: usize, values: Vec<f64>) -> Tensor {
    Tensor { shape: vec![shape_len], values }
}

impl Baseline {
    pub fn to_checkpoint(&self) -> Checkpoint<BaselineHyper> {
        let mut ck = Checkpoint::new(self.model.kind().as_str(), BaselineHyper { k: self.k, normalize: self.normalize });
        match &self.model {
            BaselineModel::Svm(m) => {
                let d = m.weights.len();
                ck.push("weights", &vector(d, m.weights.clone()));
                ck.push("bias", &vector(1, vec![m.bias]));
                ck.push("feature_mean", &vector(d, m.feature_mean.clone()));
                ck.push("feature_scale", &vector(d, m.feature_scale.clone()));
            }
            BaselineModel::AdaBoost(m) => {
                let rows: Vec<f64> = m
                    .stumps
                    .iter()
                    .flat_map(|s| [s.feature as f64, s.threshold, s.polarity, s.alpha])
                    .collect();
                ck.push("stumps", &Tensor { shape: vec![m.stumps.len(), 4], values: rows });
                ck.push("round_errors", &vector(m.round_errors.len(), m.round_errors.clone()));
            }
            BaselineModel::Forest(m) => {
                for (i, t) in m.trees.iter().enumerate() {
                    ck.push(format!("tree.{i}"), &t.to_tensor());
                }
            }
            BaselineModel::ChiSquare(m) => {
                ck.push("intron_profile", &vector(m.intron_profile.dim(), m.intron_profile.values.clone()));
                ck.push("exon_profile", &vector(m.exon_profile.dim(), m.exon_profile.values.clone()));
            }
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint<BaselineHyper>) -> Result<Self> {
        let h = &ck.hyper;
        if h.k == 0 || h.k > 12 {
            return Err(Error::Checkpoint(format!("invalid k = {}", h.k)));
        }
        let d = 1usize << (2 * h.k);
        let mut map = ck.tensor_map()?;
        let model = match ck.kind.as_str() {
            "svm" => BaselineModel::Svm(SvmModel {
                weights: map.take("weights", &[d])?.values,
                bias: map.take("bias", &[1])?.values[0],
                feature_mean: map.take("feature_mean", &[d])?.values,
                feature_scale: map.take("feature_scale", &[d])?.values,
            }),
            "adaboost" => {
                let rows = ck.tensors.iter().find(|t| t.name == "stumps").map_or(0, |t| t.shape[0]);
                let stumps = map.take("stumps", &[rows, 4])?;
                let stumps = stumps
                    .values
                    .chunks_exact(4)
                    .map(|r| Stump::from_row(r, d))
                    .collect::<Result<Vec<_>>>()?;
                let errs = ck.tensors.iter().find(|t| t.name == "round_errors").map_or(0, |t| t.values.len());
                BaselineModel::AdaBoost(AdaBoostModel { stumps, round_errors: map.take("round_errors", &[errs])?.values })
            }
            "forest" => {
                let mut trees = Vec::new();
                while let Some(t) = ck.tensors.iter().find(|t| t.name == format!("tree.{}", trees.len())) {
                    let shape = t.shape.clone();
                    trees.push(Tree::from_tensor(&map.take(&t.name, &shape)?, d)?);
                }
                if trees.is_empty() {
                    return Err(Error::Checkpoint("forest has no trees".into()));
                }
                BaselineModel::Forest(ForestModel { trees })
            }
            "chisquare" => {
                let profile = |t: Tensor| -> Result<FeatureVector> {
                    if t.values.iter().any(|&v| v <= 0.0) {
                        return Err(Error::Checkpoint("χ² profile cells must be positive".into()));
                    }
                    Ok(FeatureVector { values: t.values, k: h.k, normalized: true })
                };
                BaselineModel::ChiSquare(ChiSquareModel {
                    intron_profile: profile(map.take("intron_profile", &[d])?)?,
                    exon_profile: profile(map.take("exon_profile", &[d])?)?,
                })
            }
            other => return Err(Error::Checkpoint(format!("unknown baseline kind `{other}`"))),
        };
        map.finish()?;
        Ok(Self { k: h.k, normalize: h.normalize, model })
    }

    pub fn to_json(&self) -> Result<String> {
        self.to_checkpoint().to_json()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::parse(s)?)
    }
}
