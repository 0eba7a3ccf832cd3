//! Steganalysis decision rule and information-theoretic diagnostics.
//!
//! A scorer is calibrated on clean sequences to a mean score ȳ and a
//! population standard deviation ε. A suspect with score ŷ is flagged when
//! `|ȳ − ŷ| > ε`, strictly.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{predict_score, SteganalysisModel};
use crate::seqio::{bases_to_string, Base, Corpus, DnaSequence};

/// Anything that maps a sequence to a real-valued score.
pub trait Scorer {
    fn score(&self, bases: &[Base]) -> Result<f64>;

    /// Scores above this value are read as class 1 (intron).
    fn decision_threshold(&self) -> f64 {
        0.5
    }
}

impl Scorer for SteganalysisModel {
    fn score(&self, bases: &[Base]) -> Result<f64> {
        predict_score(self, bases)
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score(&self, bases: &[Base]) -> Result<f64> {
        (**self).score(bases)
    }

    fn decision_threshold(&self) -> f64 {
        (**self).decision_threshold()
    }
}

/// Scores a long sequence as the mean score of its non-overlapping windows.
/// A trailing partial window is ignored; sequences shorter than one window
/// are scored whole.
pub struct Windowed<S> {
    pub inner: S,
    pub window: usize,
}

impl<S: Scorer> Scorer for Windowed<S> {
    fn score(&self, bases: &[Base]) -> Result<f64> {
        if self.window == 0 || bases.len() <= self.window {
            return self.inner.score(bases);
        }
        let mut total = 0.0;
        let mut n = 0usize;
        for w in bases.chunks_exact(self.window) {
            total += self.inner.score(w)?;
            n += 1;
        }
        Ok(total / n as f64)
    }

    fn decision_threshold(&self) -> f64 {
        self.inner.decision_threshold()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelContext {
    Intron,
    Exon,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mean_score: f64,
    pub epsilon: f64,
    pub sample_count: usize,
    pub label_context: LabelContext,
}

/// Mean and population standard deviation of clean scores.
pub fn calibrate_scores(scores: &[f64], label_context: LabelContext) -> Result<Calibration> {
    if scores.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "calibration needs at least 2 clean scores, got {}",
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("calibration scores must be finite".into()));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok(Calibration { mean_score: mean, epsilon: var.sqrt(), sample_count: scores.len(), label_context })
}

pub fn calibrate<S: Scorer>(scorer: &S, clean: &[DnaSequence], label_context: LabelContext) -> Result<Calibration> {
    if clean.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "calibration needs at least 2 clean sequences, got {}",
            clean.len()
        )));
    }
    let scores = clean.iter().map(|s| scorer.score(s.bases())).collect::<Result<Vec<_>>>()?;
    calibrate_scores(&scores, label_context)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub sequence_id: String,
    pub score: f64,
    pub deviation: f64,
    pub flagged: bool,
}

pub fn detect(cal: &Calibration, score: f64) -> Detection {
    let deviation = (cal.mean_score - score).abs();
    Detection { sequence_id: String::new(), score, deviation, flagged: deviation > cal.epsilon }
}

/// Scores and tests every suspect, preserving order.
pub fn scan<S: Scorer>(scorer: &S, cal: &Calibration, suspects: &[DnaSequence]) -> Result<Vec<Detection>> {
    suspects
        .iter()
        .map(|s| {
            let d = detect(cal, scorer.score(s.bases())?);
            Ok(Detection { sequence_id: s.id.clone(), ..d })
        })
        .collect()
}

pub fn flagged_fraction(detections: &[Detection]) -> f64 {
    if detections.is_empty() {
        return 0.0;
    }
    detections.iter().filter(|d| d.flagged).count() as f64 / detections.len() as f64
}

pub fn write_detections_csv<W: Write>(writer: W, detections: &[Detection]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["seq_id", "score", "deviation", "flagged"])?;
    for d in detections {
        w.write_record([
            d.sequence_id.clone(),
            d.score.to_string(),
            d.deviation.to_string(),
            d.flagged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Probability mass over k-mer strings, kept in lexicographic order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    pub support: Vec<String>,
    pub probabilities: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn from_counts(counts: &BTreeMap<String, u64>) -> Result<Self> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(Error::InvalidArgument("distribution has no mass".into()));
        }
        let (support, probabilities) = counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (k.clone(), c as f64 / total as f64))
            .unzip();
        Ok(Self { support, probabilities })
    }

    pub fn from_probabilities(pairs: Vec<(String, f64)>) -> Result<Self> {
        let map: BTreeMap<String, f64> = pairs.into_iter().collect();
        let sum: f64 = map.values().sum();
        if map.values().any(|&p| p < 0.0 || !p.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("probabilities must be non-negative and sum to 1 (sum {sum})")));
        }
        let (support, probabilities) = map.into_iter().unzip();
        Ok(Self { support, probabilities })
    }

    pub fn get(&self, key: &str) -> f64 {
        self.support.binary_search_by(|s| s.as_str().cmp(key)).map_or(0.0, |i| self.probabilities[i])
    }
}

fn check_k(seqs: &[&[Base]], k: usize) -> Result<()> {
    let shortest = seqs.iter().map(|s| s.len()).min().unwrap_or(0);
    if k == 0 || seqs.is_empty() || k > shortest {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be in 1..={shortest} (shortest sequence)"
        )));
    }
    Ok(())
}

/// Sliding-window k-mer frequencies pooled over all sequences.
pub fn kmer_distribution(seqs: &[DnaSequence], k: usize) -> Result<EmpiricalDistribution> {
    let views: Vec<&[Base]> = seqs.iter().map(|s| s.bases()).collect();
    check_k(&views, k)?;
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for s in views {
        for w in s.windows(k) {
            *counts.entry(bases_to_string(w)).or_default() += 1;
        }
    }
    EmpiricalDistribution::from_counts(&counts)
}

fn shannon(probs: impl Iterator<Item = f64>) -> f64 {
    -probs.filter(|&p| p > 0.0).map(|p| p * p.log2()).sum::<f64>()
}

/// Shannon entropy in bits, with 0·log 0 = 0.
pub fn entropy(dist: &EmpiricalDistribution) -> f64 {
    shannon(dist.probabilities.iter().copied())
}

/// Joint distribution over ordered pairs of k-mers.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDistribution {
    pub cells: BTreeMap<(String, String), f64>,
}

impl JointDistribution {
    pub fn from_counts(counts: &BTreeMap<(String, String), u64>) -> Result<Self> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(Error::InvalidArgument("joint distribution has no mass".into()));
        }
        Ok(Self { cells: counts.iter().map(|(k, &c)| (k.clone(), c as f64 / total as f64)).collect() })
    }

    pub fn from_cells(cells: BTreeMap<(String, String), f64>) -> Result<Self> {
        let sum: f64 = cells.values().sum();
        if cells.values().any(|&p| p < 0.0 || !p.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("joint probabilities must sum to 1 (sum {sum})")));
        }
        Ok(Self { cells })
    }

    pub fn transpose(&self) -> Self {
        Self { cells: self.cells.iter().map(|((x, y), &p)| ((y.clone(), x.clone()), p)).collect() }
    }

    pub fn marginal_x(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for ((x, _), p) in &self.cells {
            *m.entry(x.clone()).or_insert(0.0) += p;
        }
        m
    }

    pub fn marginal_y(&self) -> BTreeMap<String, f64> {
        self.transpose().marginal_x()
    }

    pub fn joint_entropy(&self) -> f64 {
        shannon(self.cells.values().copied())
    }
}

/// `I(X;Y) = H(X) + H(Y) − H(X,Y)` in bits, clamped at zero against rounding.
pub fn mutual_information(joint: &JointDistribution) -> f64 {
    let hx = shannon(joint.marginal_x().into_values());
    let hy = shannon(joint.marginal_y().into_values());
    (hx + hy - joint.joint_entropy()).max(0.0)
}

/// Aligned k-mer pairs `(clean, stego)` over sequences that share an id.
pub fn paired_kmer_joint(clean: &[DnaSequence], stego: &[DnaSequence], k: usize) -> Result<Option<JointDistribution>> {
    let by_id: BTreeMap<&str, &DnaSequence> = stego.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    for c in clean {
        if let Some(s) = by_id.get(c.id.as_str()) {
            let len = c.len().min(s.len());
            if len < k {
                continue;
            }
            for i in 0..=len - k {
                let key = (bases_to_string(&c.bases()[i..i + k]), bases_to_string(&s.bases()[i..i + k]));
                *counts.entry(key).or_default() += 1;
            }
        }
    }
    if counts.is_empty() {
        return Ok(None);
    }
    JointDistribution::from_counts(&counts).map(Some)
}

/// k-mers of the stego sequence that start at modified positions; an
/// estimator for the message hiding space.
pub fn hiding_space_distribution(stego: &DnaSequence, modified_positions: &[usize], k: usize) -> Result<EmpiricalDistribution> {
    check_k(&[stego.bases()], k)?;
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for &p in modified_positions {
        let start = p.min(stego.len() - k);
        *counts.entry(bases_to_string(&stego.bases()[start..start + k])).or_default() += 1;
    }
    EmpiricalDistribution::from_counts(&counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub k: usize,
    pub h_clean: f64,
    pub h_stego: f64,
    pub delta_h: f64,
    /// Mutual information between aligned clean and stego k-mers; `None`
    /// when no sequence ids match.
    pub mi: Option<f64>,
    /// `H(stego | clean)` from the aligned pairs.
    pub h_stego_given_clean: Option<f64>,
    pub verdict: String,
}

/// Entropy of clean and stego k-mer distributions and the aligned-pair
/// mutual information. A scheme is reported insecure at `k` when the two
/// entropies differ.
pub fn security_report(clean: &Corpus, stego: &Corpus, k: usize) -> Result<SecurityReport> {
    if clean.is_empty() || stego.is_empty() {
        return Err(Error::Corpus("security report needs non-empty clean and stego corpora".into()));
    }
    let h_clean = entropy(&kmer_distribution(&clean.sequences, k)?);
    let h_stego = entropy(&kmer_distribution(&stego.sequences, k)?);
    let delta_h = (h_clean - h_stego).abs();
    let joint = paired_kmer_joint(&clean.sequences, &stego.sequences, k)?;
    let mi = joint.as_ref().map(mutual_information);
    let h_stego_given_clean = joint
        .as_ref()
        .map(|j| (j.joint_entropy() - shannon(j.marginal_x().into_values())).max(0.0));
    let verdict = if delta_h <= 1e-12 {
        format!("indistinguishable at k={k}: H(clean) = H(stego) = {h_clean:.6} bits")
    } else {
        format!(
            "not secure at k={k}: H(clean) = {h_clean:.6} bits differs from H(stego) = {h_stego:.6} bits (|dH| = {delta_h:.6})"
        )
    };
    Ok(SecurityReport { k, h_clean, h_stego, delta_h, mi, h_stego_given_clean, verdict })
}
