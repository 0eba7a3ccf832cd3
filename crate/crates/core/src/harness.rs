//! Cross-validated detection experiments.
//!
//! For every fold the selected detectors are trained on windows of the
//! training sequences, calibrated per class on the clean training sequences,
//! and evaluated on held-out sequences before and after embedding at each
//! rate. Every cell draws randomness from `(seed, cell coordinates)`, so a
//! run is reproducible and can resume from a partially written directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{Baseline, BaselineConfig, BaselineKind};
use crate::detector::{calibrate_scores, Calibration, LabelContext, Scorer, Windowed};
use crate::error::{Error, Result};
use crate::nn::{autoencode_train, train_classifier, SteganalysisModel, TrainConfig};
use crate::rng::{derive_seed, substream, Stream};
use crate::seqio::{
    generate_synthetic, label_by_intervals, parse_fasta, read_intervals_csv, Base, Corpus, DnaSequence, Label,
    NonAcgtPolicy, Source, Split, SyntheticSpec,
};
use crate::stego::{embed_message, modification_count, perturb, StegoScheme, FIVE_BIT_ALPHABET};

/// `(tp + tn) / (tp + tn + fp + fn)`.
pub fn accuracy(tp: usize, tn: usize, fp: usize, fn_: usize) -> Result<f64> {
    let total = tp + tn + fp + fn_;
    if total == 0 {
        return Err(Error::InvalidArgument("accuracy of an empty confusion matrix".into()));
    }
    Ok((tp + tn) as f64 / total as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Rnn,
    Svm,
    Adaboost,
    Forest,
    Chisquare,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] =
        [DetectorKind::Rnn, DetectorKind::Svm, DetectorKind::Adaboost, DetectorKind::Forest, DetectorKind::Chisquare];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Rnn => "rnn",
            DetectorKind::Svm => "svm",
            DetectorKind::Adaboost => "adaboost",
            DetectorKind::Forest => "forest",
            DetectorKind::Chisquare => "chisquare",
        }
    }

    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            DetectorKind::Rnn => None,
            DetectorKind::Svm => Some(BaselineKind::Svm),
            DetectorKind::Adaboost => Some(BaselineKind::Adaboost),
            DetectorKind::Forest => Some(BaselineKind::Forest),
            DetectorKind::Chisquare => Some(BaselineKind::Chisquare),
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown detector `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Intron,
    Exon,
    #[default]
    Both,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Intron => "intron",
            Region::Exon => "exon",
            Region::Both => "both",
        }
    }

    pub fn labels(self) -> &'static [Label] {
        match self {
            Region::Intron => &[Label::Intron],
            Region::Exon => &[Label::Exon],
            Region::Both => &[Label::Intron, Label::Exon],
        }
    }

    pub fn contains(self, label: Label) -> bool {
        self.labels().contains(&label)
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intron" => Ok(Region::Intron),
            "exon" => Ok(Region::Exon),
            "both" => Ok(Region::Both),
            _ => Err(Error::Config(format!("unknown region `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CorpusSource {
    Synthetic(SyntheticSpec),
    /// Genomic records cut into windows of the longest experiment length and
    /// labeled by exon intervals.
    Fasta {
        fasta: PathBuf,
        intervals: PathBuf,
        #[serde(default)]
        drop_non_acgt: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub corpus: CorpusSource,
    pub detectors: Vec<DetectorKind>,
    /// Embedding scheme; random substitutions when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<StegoScheme>,
    /// Fractions of cover nucleotides modified.
    pub rates: Vec<f64>,
    /// Held-out sequences are evaluated on prefixes of each length.
    pub lengths: Vec<usize>,
    /// Held-out sequences evaluated per cell (fewer if the fold is smaller).
    pub cases_per_cell: usize,
    pub folds: usize,
    pub region: Region,
    /// Detector input window; longer sequences are scored by window average.
    pub window: usize,
    /// Training windows drawn per fold; 0 keeps all.
    pub max_train_windows: usize,
    pub train: TrainConfig,
    pub baseline: BaselineConfig,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Lengths {600, 1200, 1800}, rates {1%, 5%, 10%}, 20 cases per cell,
    /// five folds, RNN against the χ² baseline.
    pub fn desk() -> Self {
        Self {
            corpus: CorpusSource::Synthetic(SyntheticSpec::desk(1800, 50, 1)),
            detectors: vec![DetectorKind::Rnn, DetectorKind::Chisquare],
            scheme: None,
            rates: vec![0.01, 0.05, 0.10],
            lengths: vec![600, 1200, 1800],
            cases_per_cell: 20,
            folds: 5,
            region: Region::Both,
            window: 100,
            max_train_windows: 120,
            train: TrainConfig::desk_scale(),
            baseline: BaselineConfig::default(),
            seed: 0,
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.rates.is_empty() || self.rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad(format!("rates must be a non-empty subset of [0, 1], got {:?}", self.rates));
        }
        if self.lengths.is_empty() || self.lengths.contains(&0) {
            return bad(format!("lengths must be positive, got {:?}", self.lengths));
        }
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.cases_per_cell == 0 || self.window == 0 {
            return bad("cases_per_cell and window must be positive".into());
        }
        let unique: BTreeSet<_> = self.detectors.iter().collect();
        if self.detectors.is_empty() || unique.len() != self.detectors.len() {
            return bad(format!("detectors must be non-empty and distinct, got {:?}", self.detectors));
        }
        if let CorpusSource::Synthetic(spec) = &self.corpus {
            spec.validate()?;
            if spec.seq_length < self.max_length() {
                return bad(format!(
                    "synthetic seq_length {} is shorter than the longest length {}",
                    spec.seq_length,
                    self.max_length()
                ));
            }
        }
        if self.window > self.max_length() {
            return bad(format!("window {} exceeds every length", self.window));
        }
        if let Some(s) = &self.scheme {
            s.validate()?;
        }
        self.train.validate()
    }

    fn max_length(&self) -> usize {
        self.lengths.iter().copied().max().unwrap_or(0)
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub detector: DetectorKind,
    pub region: Region,
    pub length: usize,
    pub rate: f64,
    pub fold: usize,
    pub accuracy_clean: f64,
    pub accuracy_stego: f64,
    pub accuracy_diff: f64,
    pub detection_rate: f64,
    pub false_positive_rate: f64,
}

pub const RESULT_HEADER: [&str; 10] = [
    "detector",
    "region",
    "length",
    "rate",
    "fold",
    "accuracy_clean",
    "accuracy_stego",
    "accuracy_diff",
    "detection_rate",
    "false_positive_rate",
];

type CellKey = (DetectorKind, usize, u64, usize);

impl ResultRecord {
    fn key(&self) -> CellKey {
        (self.detector, self.length, self.rate.to_bits(), self.fold)
    }

    fn has_na(&self) -> bool {
        [self.accuracy_clean, self.accuracy_stego, self.accuracy_diff, self.detection_rate, self.false_positive_rate]
            .iter()
            .any(|v| v.is_nan())
    }

    fn diverged(detector: DetectorKind, region: Region, length: usize, rate: f64, fold: usize) -> Self {
        Self {
            detector,
            region,
            length,
            rate,
            fold,
            accuracy_clean: f64::NAN,
            accuracy_stego: f64::NAN,
            accuracy_diff: f64::NAN,
            detection_rate: f64::NAN,
            false_positive_rate: f64::NAN,
        }
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        v.to_string()
    }
}

fn parse_value(s: &str) -> Result<f64> {
    if s == "NA" {
        return Ok(f64::NAN);
    }
    s.parse().map_err(|_| Error::Config(format!("bad number `{s}` in results")))
}

pub fn write_results_csv<W: Write>(writer: W, records: &[ResultRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULT_HEADER)?;
    for r in records {
        w.write_record([
            r.detector.as_str().to_string(),
            r.region.as_str().to_string(),
            r.length.to_string(),
            r.rate.to_string(),
            r.fold.to_string(),
            fmt_value(r.accuracy_clean),
            fmt_value(r.accuracy_stego),
            fmt_value(r.accuracy_diff),
            fmt_value(r.detection_rate),
            fmt_value(r.false_positive_rate),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv<R: std::io::Read>(reader: R) -> Result<Vec<ResultRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    if rdr.headers()?.iter().ne(RESULT_HEADER) {
        return Err(Error::Config("results file has an unexpected header".into()));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let int = |i: usize| row[i].parse::<usize>().map_err(|_| Error::Config(format!("bad integer `{}`", &row[i])));
        out.push(ResultRecord {
            detector: row[0].parse()?,
            region: row[1].parse()?,
            length: int(2)?,
            rate: parse_value(&row[3])?,
            fold: int(4)?,
            accuracy_clean: parse_value(&row[5])?,
            accuracy_stego: parse_value(&row[6])?,
            accuracy_diff: parse_value(&row[7])?,
            detection_rate: parse_value(&row[8])?,
            false_positive_rate: parse_value(&row[9])?,
        });
    }
    Ok(out)
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin,
/// continuing the deal across classes so fold sizes differ by at most one.
pub fn crossval_split(corpus: &Corpus, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || corpus.len() < folds {
        return Err(Error::InvalidArgument(format!(
            "{} sequences cannot fill {folds} folds",
            corpus.len()
        )));
    }
    let mut assign = vec![0; corpus.len()];
    let mut dealt = 0usize;
    for (g, label) in [Label::Intron, Label::Exon, Label::Unknown].into_iter().enumerate() {
        let mut idx: Vec<usize> = (0..corpus.len()).filter(|&i| corpus.sequences[i].label == label).collect();
        idx.shuffle(&mut substream(seed, Stream::Split, &[0, g as u64]));
        for i in idx {
            assign[i] = dealt % folds;
            dealt += 1;
        }
    }
    Ok(assign)
}

pub fn load_corpus(cfg: &ExperimentConfig) -> Result<Corpus> {
    let corpus = match &cfg.corpus {
        CorpusSource::Synthetic(spec) => generate_synthetic(spec)?,
        CorpusSource::Fasta { fasta, intervals, drop_non_acgt } => {
            let policy = if *drop_non_acgt { NonAcgtPolicy::Drop } else { NonAcgtPolicy::Reject };
            let records = parse_fasta(std::io::BufReader::new(fs::File::open(fasta)?), policy)?;
            let intervals = read_intervals_csv(fs::File::open(intervals)?)?;
            let window = cfg.max_length();
            let mut seqs = Vec::new();
            for r in records.iter().filter(|r| r.len() >= window) {
                let iv = intervals.get(&r.id).map_or(&[][..], |v| v.as_slice());
                seqs.extend(label_by_intervals(r, iv, window)?);
            }
            Corpus::new(seqs, Split::Train, Source::Fasta)
        }
    };
    for label in [Label::Intron, Label::Exon] {
        if corpus.count_label(label) < cfg.folds {
            return Err(Error::Corpus(format!(
                "need at least {} {label} sequences of length {}, found {}",
                cfg.folds,
                cfg.max_length(),
                corpus.count_label(label)
            )));
        }
    }
    Ok(corpus)
}

enum Trained {
    Rnn(SteganalysisModel),
    Baseline(Baseline),
}

impl Scorer for Trained {
    fn score(&self, bases: &[Base]) -> Result<f64> {
        match self {
            Trained::Rnn(m) => m.score(bases),
            Trained::Baseline(b) => b.score(bases),
        }
    }

    fn decision_threshold(&self) -> f64 {
        match self {
            Trained::Rnn(m) => m.decision_threshold(),
            Trained::Baseline(b) => b.decision_threshold(),
        }
    }
}

fn train_detector(kind: DetectorKind, windows: &[DnaSequence], cfg: &ExperimentConfig, fold: usize) -> Result<Trained> {
    match kind.baseline() {
        None => {
            let train = TrainConfig { seed: derive_seed(cfg.seed, Stream::Init, &[fold as u64]), ..cfg.train.clone() };
            let corpus = Corpus::new(windows.to_vec(), Split::Train, Source::Synthetic);
            let pre = autoencode_train(&corpus, &train)?;
            Ok(Trained::Rnn(train_classifier(&corpus, Some(&pre), &train)?.model))
        }
        Some(b) => {
            let seqs: Vec<&[Base]> = windows.iter().map(|w| w.bases()).collect();
            let labels: Vec<u8> = windows.iter().map(|w| w.label.class().unwrap_or(0)).collect();
            let bcfg = BaselineConfig {
                seed: derive_seed(cfg.seed, Stream::Baseline, &[fold as u64, kind as u64]),
                ..cfg.baseline.clone()
            };
            Ok(Trained::Baseline(Baseline::train(b, &seqs, &labels, &bcfg)?))
        }
    }
}

fn prefix(seq: &DnaSequence, len: usize) -> Result<DnaSequence> {
    seq.with_bases(seq.bases()[..len].to_vec())
}

/// Tiles each sequence into whole windows, then keeps a seeded sample.
fn training_windows(seqs: &[&DnaSequence], cfg: &ExperimentConfig, fold: usize) -> Result<Vec<DnaSequence>> {
    let mut out = Vec::new();
    for s in seqs {
        for (i, w) in s.bases().chunks_exact(cfg.window).enumerate() {
            out.push(DnaSequence::new(format!("{}#w{i}", s.id), w.to_vec(), s.label)?);
        }
    }
    out.shuffle(&mut substream(cfg.seed, Stream::Split, &[1, fold as u64]));
    if cfg.max_train_windows > 0 {
        out.truncate(cfg.max_train_windows);
    }
    Ok(out)
}

/// The stego version of held-out sequence `index` at `(length, rate)`. It is
/// the same for every detector and fold.
fn make_stego(cfg: &ExperimentConfig, clean: &DnaSequence, rate_idx: usize, index: usize) -> Result<DnaSequence> {
    let rate = cfg.rates[rate_idx];
    let coords = [clean.len() as u64, rate_idx as u64, index as u64];
    match &cfg.scheme {
        None => Ok(perturb(clean, rate, derive_seed(cfg.seed, Stream::Perturb, &coords))?.stego_sequence),
        Some(scheme) => {
            let bits = modification_count(rate, clean.len());
            if bits == 0 {
                return Ok(clean.clone());
            }
            let mut rng = substream(cfg.seed, Stream::Perturb, &coords);
            let message: Vec<u8> = match scheme {
                StegoScheme::Fivebit { .. } => {
                    let alphabet = FIVE_BIT_ALPHABET.as_bytes();
                    (0..bits.div_ceil(5)).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
                }
                _ => (0..bits.div_ceil(8)).map(|_| rng.gen()).collect(),
            };
            Ok(embed_message(clean, scheme, &message)?.stego_sequence)
        }
    }
}

struct Evaluated {
    correct: usize,
    flagged: usize,
    total: usize,
}

fn evaluate(threshold: f64, cals: &BTreeMap<Label, Calibration>, scored: &[(Label, f64)]) -> Result<Evaluated> {
    let (mut tp, mut tn, mut fp, mut fn_, mut flagged) = (0, 0, 0, 0, 0);
    for &(label, score) in scored {
        let predicted_intron = score > threshold;
        match (label == Label::Intron, predicted_intron) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
        }
        let cal = &cals[&label];
        if (cal.mean_score - score).abs() > cal.epsilon {
            flagged += 1;
        }
    }
    let total = scored.len();
    let correct = (accuracy(tp, tn, fp, fn_)? * total as f64).round() as usize;
    Ok(Evaluated { correct, flagged, total })
}

/// Window scores of one clean sequence, computed once and shared by every
/// prefix length.
struct CleanScores<'a> {
    seq: &'a DnaSequence,
    windows: Vec<f64>,
}

fn cache_scores<'a, S: Scorer>(inner: &S, seqs: Vec<&'a DnaSequence>, window: usize, max_length: usize) -> Result<Vec<CleanScores<'a>>> {
    seqs.into_iter().map(|s| CleanScores::new(inner, s, window, max_length)).collect()
}

impl<'a> CleanScores<'a> {
    fn new<S: Scorer>(inner: &S, seq: &'a DnaSequence, window: usize, max_length: usize) -> Result<Self> {
        let windows = if window == 0 {
            Vec::new()
        } else {
            seq.bases()[..max_length.min(seq.len())].chunks_exact(window).map(|w| inner.score(w)).collect::<Result<_>>()?
        };
        Ok(Self { seq, windows })
    }

    /// Same value as scoring the `len` prefix with [`Windowed`].
    fn prefix_score<S: Scorer>(&self, inner: &S, window: usize, len: usize) -> Result<f64> {
        if window == 0 || len <= window {
            return inner.score(&self.seq.bases()[..len]);
        }
        let n = len / window;
        let total = self.windows[..n].iter().fold(0.0, |acc, s| acc + s);
        Ok(total / n as f64)
    }
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentOutcome {
    /// Every cell of the grid in canonical order: detector, length, rate, fold.
    pub records: Vec<ResultRecord>,
    /// Cells that produced "NA" rows, with the reason.
    pub warnings: Vec<String>,
    /// Cells taken from an earlier run instead of recomputed.
    pub reused_cells: usize,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    run_experiment_resuming(cfg, &[])
}

/// Runs every grid cell not already present in `existing`.
pub fn run_experiment_resuming(cfg: &ExperimentConfig, existing: &[ResultRecord]) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let corpus = load_corpus(cfg)?;
    let assign = crossval_split(&corpus, cfg.folds, cfg.seed)?;
    let mut done: BTreeMap<CellKey, ResultRecord> = BTreeMap::new();
    for r in existing.iter().filter(|r| r.region == cfg.region) {
        done.insert(r.key(), r.clone());
    }
    let grid_keys = |d: DetectorKind, fold: usize| {
        cfg.lengths.iter().flat_map(move |&l| cfg.rates.iter().map(move |&r| (d, l, r.to_bits(), fold)))
    };
    let mut out = ExperimentOutcome::default();
    let mut fresh: BTreeMap<CellKey, ResultRecord> = BTreeMap::new();

    for fold in 0..cfg.folds {
        let pending: Vec<DetectorKind> = cfg
            .detectors
            .iter()
            .copied()
            .filter(|&d| grid_keys(d, fold).any(|k| !done.contains_key(&k)))
            .collect();
        if pending.is_empty() {
            continue;
        }
        let train_seqs: Vec<&DnaSequence> =
            corpus.sequences.iter().zip(&assign).filter(|(_, &f)| f != fold).map(|(s, _)| s).collect();
        let held_out: Vec<(usize, &DnaSequence)> = corpus
            .sequences
            .iter()
            .enumerate()
            .filter(|(i, s)| assign[*i] == fold && cfg.region.contains(s.label))
            .take(cfg.cases_per_cell)
            .collect();
        let windows = training_windows(&train_seqs, cfg, fold)?;

        for detector in pending {
            let trained = match train_detector(detector, &windows, cfg, fold) {
                Ok(t) => t,
                Err(e @ (Error::Diverged { .. } | Error::NonFiniteLoss)) => {
                    out.warnings.push(format!("detector {detector}, fold {fold}: {e}"));
                    for &length in &cfg.lengths {
                        for &rate in &cfg.rates {
                            let r = ResultRecord::diverged(detector, cfg.region, length, rate, fold);
                            fresh.entry(r.key()).or_insert(r);
                        }
                    }
                    continue;
                }
                Err(e) => {
                    return Err(Error::Cell { coords: format!("detector {detector}, fold {fold}"), source: Box::new(e) })
                }
            };
            let scorer = Windowed { inner: &trained, window: cfg.window };
            let threshold = scorer.decision_threshold();
            let max_length = cfg.max_length();
            let cache = |seqs| cache_scores(&trained, seqs, cfg.window, max_length);
            let cell_err = |e: Error| Error::Cell { coords: format!("detector {detector}, fold {fold}"), source: Box::new(e) };
            let calibration_cache: Vec<(Label, Vec<CleanScores>)> = cfg
                .region
                .labels()
                .iter()
                .map(|&label| Ok((label, cache(train_seqs.iter().copied().filter(|s| s.label == label).collect())?)))
                .collect::<Result<_>>()
                .map_err(cell_err)?;
            let held_out_cache = cache(held_out.iter().map(|(_, s)| *s).collect()).map_err(cell_err)?;
            for &length in &cfg.lengths {
                let cell_err =
                    |e: Error| Error::Cell { coords: format!("detector {detector}, fold {fold}, length {length}"), source: Box::new(e) };
                let mut cals = BTreeMap::new();
                for (label, cached) in &calibration_cache {
                    let scores: Vec<f64> = cached
                        .iter()
                        .map(|c| c.prefix_score(&trained, cfg.window, length))
                        .collect::<Result<_>>()
                        .map_err(cell_err)?;
                    let context = if *label == Label::Intron { LabelContext::Intron } else { LabelContext::Exon };
                    cals.insert(*label, calibrate_scores(&scores, context).map_err(cell_err)?);
                }
                let clean: Vec<DnaSequence> = held_out.iter().map(|(_, s)| prefix(s, length)).collect::<Result<_>>()?;
                let clean_scored: Vec<(Label, f64)> = held_out_cache
                    .iter()
                    .map(|c| Ok((c.seq.label, c.prefix_score(&trained, cfg.window, length)?)))
                    .collect::<Result<_>>()
                    .map_err(cell_err)?;
                let base = evaluate(threshold, &cals, &clean_scored).map_err(cell_err)?;
                for (ri, &rate) in cfg.rates.iter().enumerate() {
                    if done.contains_key(&(detector, length, rate.to_bits(), fold)) {
                        continue;
                    }
                    let stego: Vec<DnaSequence> = held_out
                        .iter()
                        .zip(&clean)
                        .map(|((i, _), c)| make_stego(cfg, c, ri, *i))
                        .collect::<Result<_>>()
                        .map_err(|e| Error::Cell {
                            coords: format!("length {length}, rate {rate}"),
                            source: Box::new(e),
                        })?;
                    let stego_scored: Vec<(Label, f64)> = stego
                        .iter()
                        .map(|s| Ok((s.label, scorer.score(s.bases())?)))
                        .collect::<Result<_>>()
                        .map_err(cell_err)?;
                    let st = evaluate(threshold, &cals, &stego_scored).map_err(cell_err)?;
                    let n = base.total as f64;
                    let accuracy_clean = base.correct as f64 / n;
                    let accuracy_stego = st.correct as f64 / n;
                    let r = ResultRecord {
                        detector,
                        region: cfg.region,
                        length,
                        rate,
                        fold,
                        accuracy_clean,
                        accuracy_stego,
                        accuracy_diff: accuracy_clean - accuracy_stego,
                        detection_rate: st.flagged as f64 / n,
                        false_positive_rate: base.flagged as f64 / n,
                    };
                    fresh.insert(r.key(), r);
                }
            }
        }
    }

    for &d in &cfg.detectors {
        for &length in &cfg.lengths {
            for &rate in &cfg.rates {
                for fold in 0..cfg.folds {
                    let key = (d, length, rate.to_bits(), fold);
                    let r = match done.get(&key) {
                        Some(r) => {
                            out.reused_cells += 1;
                            r.clone()
                        }
                        None => fresh.remove(&key).expect("every pending cell was computed"),
                    };
                    if r.has_na() && done.contains_key(&key) {
                        out.warnings.push(format!("detector {d}, length {length}, rate {rate}, fold {fold}: NA from an earlier run"));
                    }
                    out.records.push(r);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub detector: DetectorKind,
    pub region: Region,
    pub rate: f64,
    /// Cells with finite values.
    pub cells: usize,
    pub na_cells: usize,
    pub accuracy_diff_mean: f64,
    /// Sample standard deviation; 0 for a single cell.
    pub accuracy_diff_std: f64,
    pub detection_rate_mean: f64,
    pub false_positive_rate_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub na_rows: usize,
}

/// Mean ± std of `accuracy_diff` per (detector, region, rate), pooled over
/// lengths and folds, in first-appearance order.
pub fn summarize(records: &[ResultRecord]) -> Summary {
    let mut order: Vec<(DetectorKind, Region, u64)> = Vec::new();
    for r in records {
        let k = (r.detector, r.region, r.rate.to_bits());
        if !order.contains(&k) {
            order.push(k);
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let rows = order
        .into_iter()
        .map(|(detector, region, rate_bits)| {
            let group: Vec<&ResultRecord> = records
                .iter()
                .filter(|r| (r.detector, r.region, r.rate.to_bits()) == (detector, region, rate_bits))
                .collect();
            let ok: Vec<&&ResultRecord> = group.iter().filter(|r| !r.has_na()).collect();
            let diffs: Vec<f64> = ok.iter().map(|r| r.accuracy_diff).collect();
            let m = mean(&diffs);
            let std = if diffs.len() > 1 {
                (diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64).sqrt()
            } else if diffs.len() == 1 {
                0.0
            } else {
                f64::NAN
            };
            SummaryRow {
                detector,
                region,
                rate: f64::from_bits(rate_bits),
                cells: ok.len(),
                na_cells: group.len() - ok.len(),
                accuracy_diff_mean: m,
                accuracy_diff_std: std,
                detection_rate_mean: mean(&ok.iter().map(|r| r.detection_rate).collect::<Vec<_>>()),
                false_positive_rate_mean: mean(&ok.iter().map(|r| r.false_positive_rate).collect::<Vec<_>>()),
            }
        })
        .collect();
    Summary { rows, na_rows: records.iter().filter(|r| r.has_na()).count() }
}

#[derive(Serialize)]
struct Manifest<'a> {
    toolkit: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a ExperimentConfig,
}

/// Writes `bytes` unless the file already holds exactly them.
fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<()> {
    if fs::read(path).map_or(true, |old| old != bytes) {
        fs::write(path, bytes)?;
    }
    Ok(())
}

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "run_manifest.json";

/// Writes `results.csv`, `summary.json` and `run_manifest.json` into `dir`
/// and returns the number of "NA" rows.
pub fn emit_results(records: &[ResultRecord], dir: &Path, cfg: &ExperimentConfig) -> Result<usize> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no result records to emit".into()));
    }
    fs::create_dir_all(dir)?;
    let mut csv = Vec::new();
    write_results_csv(&mut csv, records)?;
    write_if_changed(&dir.join(RESULTS_FILE), &csv)?;
    let summary = summarize(records);
    write_if_changed(&dir.join(SUMMARY_FILE), (serde_json::to_string_pretty(&summary)? + "\n").as_bytes())?;
    let manifest = Manifest { toolkit: "stegodna", version: env!("CARGO_PKG_VERSION"), seed: cfg.seed, config: cfg };
    write_if_changed(&dir.join(MANIFEST_FILE), (serde_json::to_string_pretty(&manifest)? + "\n").as_bytes())?;
    Ok(summary.na_rows)
}

/// Runs the experiment into `dir`, reusing any cells already in its
/// `results.csv`.
pub fn run_in_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<ExperimentOutcome> {
    let path = dir.join(RESULTS_FILE);
    let existing = if path.exists() { read_results_csv(fs::File::open(&path)?)? } else { Vec::new() };
    let outcome = run_experiment_resuming(cfg, &existing)?;
    emit_results(&outcome.records, dir, cfg)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(99, 1, 0, 0).unwrap(), 1.0);
        assert_eq!(accuracy(50, 0, 50, 0).unwrap(), 0.5);
        assert_eq!(accuracy(0, 0, 0, 1).unwrap(), 0.0);
        assert!(accuracy(0, 0, 0, 0).is_err());
    }

    fn labeled(n_intron: usize, n_exon: usize) -> Corpus {
        let mk = |i: usize, label| DnaSequence::from_str(format!("{label}{i}"), "ACGT", label).unwrap();
        let seqs = (0..n_intron).map(|i| mk(i, Label::Intron)).chain((0..n_exon).map(|i| mk(i, Label::Exon))).collect();
        Corpus::new(seqs, Split::Train, Source::Synthetic)
    }

    fn fold_sizes(assign: &[usize], folds: usize) -> Vec<usize> {
        (0..folds).map(|f| assign.iter().filter(|&&a| a == f).count()).collect()
    }

    #[test]
    fn ten_sequences_five_folds() {
        let assign = crossval_split(&labeled(4, 6), 5, 3).unwrap();
        assert_eq!(fold_sizes(&assign, 5), vec![2; 5]);
        assert_eq!(assign, crossval_split(&labeled(4, 6), 5, 3).unwrap());
        assert!(crossval_split(&labeled(1, 2), 5, 3).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_and_stratify(n_intron in 0usize..40, n_exon in 0usize..40, folds in 2usize..7, seed in any::<u64>()) {
            prop_assume!(n_intron + n_exon >= folds);
            let corpus = labeled(n_intron, n_exon);
            let assign = crossval_split(&corpus, folds, seed).unwrap();
            prop_assert_eq!(assign.len(), corpus.len());
            let sizes = fold_sizes(&assign, folds);
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let global = n_intron as f64 / corpus.len() as f64;
            for f in 0..folds {
                let members: Vec<usize> = (0..corpus.len()).filter(|&i| assign[i] == f).collect();
                let introns = members.iter().filter(|&&i| corpus.sequences[i].label == Label::Intron).count();
                let ratio = introns as f64 / members.len() as f64;
                prop_assert!((ratio - global).abs() <= 1.0 / members.len() as f64 + 1e-12);
            }
        }
    }

    fn record(detector: DetectorKind, rate: f64, fold: usize, clean: f64, stego: f64) -> ResultRecord {
        ResultRecord {
            detector,
            region: Region::Both,
            length: 600,
            rate,
            fold,
            accuracy_clean: clean,
            accuracy_stego: stego,
            accuracy_diff: clean - stego,
            detection_rate: 0.5,
            false_positive_rate: 0.25,
        }
    }

    #[test]
    fn results_csv_round_trip_with_na() {
        let mut rows = vec![record(DetectorKind::Rnn, 0.01, 0, 1.0, 0.95)];
        let mut csv = Vec::new();
        write_results_csv(&mut csv, &rows).unwrap();
        let text = String::from_utf8(csv.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().next().unwrap(), RESULT_HEADER.join(","));
        assert_eq!(read_results_csv(&csv[..]).unwrap(), rows);

        rows.push(ResultRecord::diverged(DetectorKind::Svm, Region::Both, 600, 0.05, 1));
        let mut csv = Vec::new();
        write_results_csv(&mut csv, &rows).unwrap();
        let text = String::from_utf8(csv.clone()).unwrap();
        assert!(text.lines().nth(2).unwrap().ends_with("NA,NA,NA,NA,NA"));
        let back = read_results_csv(&csv[..]).unwrap();
        assert!(back[1].accuracy_clean.is_nan());
        assert_eq!(summarize(&back).na_rows, 1);
    }

    #[test]
    fn summary_matches_hand_computation() {
        let clean = [1.0, 0.95, 0.9, 1.0, 0.85, 1.0, 0.9, 0.95, 1.0, 0.8];
        let stego = [0.9, 0.95, 0.7, 0.8, 0.85, 0.95, 0.9, 0.75, 1.0, 0.6];
        let rows: Vec<_> = (0..10)
            .map(|i| record(DetectorKind::Rnn, if i < 5 { 0.01 } else { 0.05 }, i % 5, clean[i], stego[i]))
            .collect();
        let s = summarize(&rows);
        assert_eq!(s.rows.len(), 2);
        // Diffs for rate 0.01: 0.1, 0, 0.2, 0.2, 0 → mean 0.1, sample std √0.01 = 0.1.
        assert!((s.rows[0].accuracy_diff_mean - 0.1).abs() < 1e-12);
        assert!((s.rows[0].accuracy_diff_std - 0.1).abs() < 1e-12);
        // Rate 0.05: 0.05, 0, 0.2, 0, 0.2 → mean 0.09, sample std √0.0105.
        assert!((s.rows[1].accuracy_diff_mean - 0.09).abs() < 1e-12);
        assert!((s.rows[1].accuracy_diff_std - 0.0105f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.rows[1].cells, 5);
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::desk().validate().is_ok());
        let bad = [
            ExperimentConfig { rates: vec![1.5], ..ExperimentConfig::desk() },
            ExperimentConfig { folds: 1, ..ExperimentConfig::desk() },
            ExperimentConfig { lengths: vec![0], ..ExperimentConfig::desk() },
            ExperimentConfig { lengths: vec![5000], ..ExperimentConfig::desk() },
            ExperimentConfig { detectors: vec![DetectorKind::Rnn, DetectorKind::Rnn], ..ExperimentConfig::desk() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        let json = serde_json::to_string(&ExperimentConfig::desk()).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), ExperimentConfig::desk());
        let partial: ExperimentConfig = serde_json::from_str(r#"{"folds": 3, "detectors": ["svm"]}"#).unwrap();
        assert_eq!((partial.folds, partial.detectors.clone()), (3, vec![DetectorKind::Svm]));
    }

    fn tiny(detectors: Vec<DetectorKind>, rates: Vec<f64>) -> ExperimentConfig {
        ExperimentConfig {
            corpus: CorpusSource::Synthetic(SyntheticSpec::desk(200, 6, 5)),
            detectors,
            rates,
            lengths: vec![100, 200],
            cases_per_cell: 4,
            folds: 3,
            window: 50,
            max_train_windows: 0,
            ..ExperimentConfig::desk()
        }
    }

    #[test]
    fn rate_zero_leaves_accuracy_unchanged() {
        let cfg = tiny(vec![DetectorKind::Chisquare, DetectorKind::Forest], vec![0.0, 0.1]);
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.records.len(), 2 * 2 * 2 * 3);
        for r in out.records.iter().filter(|r| r.rate == 0.0) {
            assert_eq!(r.accuracy_diff, 0.0);
            assert_eq!(r.detection_rate, r.false_positive_rate);
        }
        for r in &out.records {
            assert_eq!(r.accuracy_diff, r.accuracy_clean - r.accuracy_stego);
            for v in [r.accuracy_clean, r.accuracy_stego, r.detection_rate, r.false_positive_rate] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        assert_eq!(run_experiment(&cfg).unwrap().records, out.records);
    }

    #[test]
    fn resumes_from_partial_results() {
        let cfg = tiny(vec![DetectorKind::Svm, DetectorKind::Adaboost], vec![0.05]);
        let full = run_experiment(&cfg).unwrap();
        let partial: Vec<_> = full.records.iter().filter(|r| r.detector == DetectorKind::Svm).cloned().collect();
        let resumed = run_experiment_resuming(&cfg, &partial).unwrap();
        assert_eq!(resumed.records, full.records);
        assert_eq!(resumed.reused_cells, partial.len());
    }

    #[test]
    fn scheme_capacity_errors_name_the_cell() {
        let cfg = ExperimentConfig {
            scheme: Some(StegoScheme::Codon { codon_table: crate::stego::CodonTable::standard() }),
            ..tiny(vec![DetectorKind::Chisquare], vec![1.0])
        };
        let err = run_experiment(&cfg).unwrap_err().to_string();
        assert!(err.contains("rate 1"), "{err}");
    }

    #[test]
    fn emit_rejects_empty_records() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_results(&[], dir.path(), &ExperimentConfig::desk()).is_err());
    }
}
