//! Sequence ingestion, window labeling and synthetic corpus generation.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

/// One nucleotide. The discriminant is the canonical index used by every
/// encoder in the crate (A=0, C=1, G=2, T=3).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Base {
    A = 0,
    C = 1,
    G = 2,
    T = 3,
}

impl Base {
    pub const ALL: [Base; 4] = [Base::A, Base::C, Base::G, Base::T];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Base {
        Base::ALL[i & 3]
    }

    pub fn from_char(c: char) -> Option<Base> {
        match c.to_ascii_uppercase() {
            'A' => Some(Base::A),
            'C' => Some(Base::C),
            'G' => Some(Base::G),
            'T' => Some(Base::T),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        ['A', 'C', 'G', 'T'][self.index()]
    }
}

/// Parses a string over {A,C,G,T} (case-insensitive).
pub fn parse_bases(s: &str) -> Result<Vec<Base>> {
    s.chars()
        .enumerate()
        .map(|(i, c)| {
            Base::from_char(c).ok_or_else(|| {
                Error::InvalidSequence(format!("character {c:?} at offset {i} is not A/C/G/T"))
            })
        })
        .collect()
}

pub fn bases_to_string(bases: &[Base]) -> String {
    bases.iter().map(|b| b.to_char()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Intron,
    Exon,
    Unknown,
}

impl Label {
    /// Class index used by the classifiers: intron is the positive class.
    pub fn class(self) -> Option<u8> {
        match self {
            Label::Intron => Some(1),
            Label::Exon => Some(0),
            Label::Unknown => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Intron => "intron",
            Label::Exon => "exon",
            Label::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A labeled, non-empty nucleotide string.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnaSequence {
    pub id: String,
    bases: Vec<Base>,
    pub label: Label,
}

impl DnaSequence {
    pub fn new(id: impl Into<String>, bases: Vec<Base>, label: Label) -> Result<Self> {
        let id = id.into();
        if bases.is_empty() {
            return Err(Error::InvalidSequence(format!("sequence `{id}` is empty")));
        }
        Ok(Self { id, bases, label })
    }

    pub fn from_str(id: impl Into<String>, bases: &str, label: Label) -> Result<Self> {
        Self::new(id, parse_bases(bases)?, label)
    }

    pub fn bases(&self) -> &[Base] {
        &self.bases
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn to_bases_string(&self) -> String {
        bases_to_string(&self.bases)
    }

    /// Same id and label, different bases (which must be non-empty).
    pub fn with_bases(&self, bases: Vec<Base>) -> Result<Self> {
        Self::new(self.id.clone(), bases, self.label)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Fasta,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub sequences: Vec<DnaSequence>,
    pub split: Split,
    pub source: Source,
}

impl Corpus {
    pub fn new(sequences: Vec<DnaSequence>, split: Split, source: Source) -> Self {
        Self { sequences, split, source }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.sequences.iter().filter(|s| s.label == label).count()
    }

    /// Checks the labeled-corpus invariant: at least one intron and one exon.
    pub fn ensure_labeled(&self) -> Result<()> {
        if self.count_label(Label::Intron) == 0 || self.count_label(Label::Exon) == 0 {
            return Err(Error::Corpus(
                "a labeled corpus needs at least one intron and one exon sequence".into(),
            ));
        }
        Ok(())
    }
}

/// Checks that no sequence id appears in more than one corpus.
pub fn ensure_disjoint(corpora: &[&Corpus]) -> Result<()> {
    let mut seen: HashSet<&str> = HashSet::new();
    for corpus in corpora {
        let mut local: HashSet<&str> = HashSet::new();
        for s in &corpus.sequences {
            local.insert(s.id.as_str());
        }
        for id in local {
            if !seen.insert(id) {
                return Err(Error::Corpus(format!("sequence id `{id}` appears in two splits")));
            }
        }
    }
    Ok(())
}

/// What to do with characters outside {A,C,G,T} when reading FASTA.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NonAcgtPolicy {
    #[default]
    Reject,
    Drop,
}

/// Reads FASTA records. Ids are the header up to the first whitespace; a
/// `label=intron|exon` token later in the header sets the label.
pub fn parse_fasta<R: BufRead>(reader: R, policy: NonAcgtPolicy) -> Result<Vec<DnaSequence>> {
    let mut out = Vec::new();
    let mut current: Option<(String, Label, Vec<Base>)> = None;

    fn finish(rec: Option<(String, Label, Vec<Base>)>, out: &mut Vec<DnaSequence>) -> Result<()> {
        if let Some((id, label, bases)) = rec {
            if bases.is_empty() {
                return Err(Error::Fasta(format!("record `{id}` has no sequence data")));
            }
            out.push(DnaSequence::new(id, bases, label)?);
        }
        Ok(())
    }

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            finish(current.take(), &mut out)?;
            let mut words = header.split_whitespace();
            let id = words.next().unwrap_or("").to_string();
            if id.is_empty() {
                return Err(Error::Fasta(format!("line {}: header without an id", lineno + 1)));
            }
            let mut label = Label::Unknown;
            for w in words {
                match w.strip_prefix("label=") {
                    Some("intron") => label = Label::Intron,
                    Some("exon") => label = Label::Exon,
                    Some("unknown") => label = Label::Unknown,
                    Some(other) => {
                        return Err(Error::Fasta(format!("line {}: unknown label `{other}`", lineno + 1)))
                    }
                    None => {}
                }
            }
            current = Some((id, label, Vec::new()));
            continue;
        }
        let Some((id, _, bases)) = current.as_mut() else {
            return Err(Error::Fasta(format!(
                "line {}: sequence data before any '>' header",
                lineno + 1
            )));
        };
        for ch in line.chars() {
            if ch.is_whitespace() {
                continue;
            }
            match Base::from_char(ch) {
                Some(b) => bases.push(b),
                None => match policy {
                    NonAcgtPolicy::Drop => {}
                    NonAcgtPolicy::Reject => {
                        return Err(Error::DisallowedBase {
                            id: id.clone(),
                            ch,
                            offset: bases.len(),
                        })
                    }
                },
            }
        }
    }
    finish(current, &mut out)?;
    Ok(out)
}

/// Writes 60-column FASTA. Labeled sequences get a `label=` header token,
/// which [`parse_fasta`] reads back.
pub fn write_fasta<W: Write>(mut writer: W, seqs: &[DnaSequence]) -> Result<()> {
    const WIDTH: usize = 60;
    for s in seqs {
        match s.label {
            Label::Unknown => writeln!(writer, ">{}", s.id)?,
            label => writeln!(writer, ">{} label={label}", s.id)?,
        }
        for chunk in s.bases().chunks(WIDTH) {
            writeln!(writer, "{}", bases_to_string(chunk))?;
        }
    }
    Ok(())
}

/// Half-open exon interval `[start, end)`.
pub type Interval = (usize, usize);

/// Reads a headered `seq_id,start,end` CSV into sorted per-sequence intervals.
pub fn read_intervals_csv<R: std::io::Read>(reader: R) -> Result<BTreeMap<String, Vec<Interval>>> {
    #[derive(Deserialize)]
    struct Row {
        seq_id: String,
        start: usize,
        end: usize,
    }
    let mut map: BTreeMap<String, Vec<Interval>> = BTreeMap::new();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    for row in rdr.deserialize() {
        let row: Row = row?;
        map.entry(row.seq_id).or_default().push((row.start, row.end));
    }
    for v in map.values_mut() {
        v.sort_unstable();
    }
    Ok(map)
}

/// Tiles `seq` into non-overlapping windows and labels each one exon (fully
/// inside an interval) or intron (fully outside). Straddling windows are dropped.
pub fn label_by_intervals(
    seq: &DnaSequence,
    exon_intervals: &[Interval],
    window: usize,
) -> Result<Vec<DnaSequence>> {
    if window == 0 || window > seq.len() {
        return Err(Error::InvalidArgument(format!(
            "window {window} must be in 1..={}",
            seq.len()
        )));
    }
    let mut prev_end = 0usize;
    for (i, &(s, e)) in exon_intervals.iter().enumerate() {
        if s >= e || e > seq.len() {
            return Err(Error::Intervals(format!(
                "interval [{s},{e}) is empty or outside 0..{}",
                seq.len()
            )));
        }
        if i > 0 && s < prev_end {
            return Err(Error::Intervals(format!(
                "interval [{s},{e}) overlaps or precedes the previous one"
            )));
        }
        prev_end = e;
    }

    let mut out = Vec::new();
    for start in (0..=seq.len() - window).step_by(window) {
        let end = start + window;
        let inside = exon_intervals.iter().any(|&(s, e)| s <= start && end <= e);
        let outside = exon_intervals.iter().all(|&(s, e)| e <= start || end <= s);
        let label = match (inside, outside) {
            (true, _) => Label::Exon,
            (false, true) => Label::Intron,
            (false, false) => continue,
        };
        out.push(DnaSequence::new(
            format!("{}:{}-{}", seq.id, start, end),
            seq.bases()[start..end].to_vec(),
            label,
        )?);
    }
    Ok(out)
}

/// Two Markov chains (intron, exon) from which a labeled corpus is drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub markov_order: usize,
    /// 4^order rows, each a distribution over the next base (A,C,G,T).
    pub intron_transitions: Vec<Vec<f64>>,
    pub exon_transitions: Vec<Vec<f64>>,
    pub seq_length: usize,
    pub count_per_class: usize,
    pub seed: u64,
    /// Fixed initial context of `markov_order` bases; drawn uniformly when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_context: Option<String>,
}

/// Minimum total-variation distance required between some pair of class rows.
pub const MIN_CLASS_TV: f64 = 0.05;

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

impl SyntheticSpec {
    /// Order-1 chains in which each class follows its own cycle with
    /// probability 0.7 (intron A→C→G→T→A, exon A→T→G→C→A) and every other
    /// base with probability 0.1. Row TV distance between classes is 0.6.
    pub fn desk(seq_length: usize, count_per_class: usize, seed: u64) -> Self {
        let cycle = |step: usize| -> Vec<Vec<f64>> {
            (0..4).map(|r| (0..4).map(|c| if c == (r + step) % 4 { 0.7 } else { 0.1 }).collect()).collect()
        };
        Self {
            markov_order: 1,
            intron_transitions: cycle(1),
            exon_transitions: cycle(3),
            seq_length,
            count_per_class,
            seed,
            start_context: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.markov_order == 0 || self.markov_order > 8 {
            return Err(Error::SyntheticSpec("markov_order must be in 1..=8".into()));
        }
        if self.seq_length == 0 || self.count_per_class == 0 {
            return Err(Error::SyntheticSpec(
                "seq_length and count_per_class must be positive".into(),
            ));
        }
        let rows = 4usize.pow(self.markov_order as u32);
        for (name, m) in [("intron", &self.intron_transitions), ("exon", &self.exon_transitions)] {
            if m.len() != rows {
                return Err(Error::SyntheticSpec(format!(
                    "{name} matrix has {} rows, expected {rows}",
                    m.len()
                )));
            }
            for (r, row) in m.iter().enumerate() {
                if row.len() != 4 || row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::SyntheticSpec(format!(
                        "{name} row {r} must hold 4 non-negative probabilities"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::SyntheticSpec(format!(
                        "{name} row {r} sums to {sum}, not 1"
                    )));
                }
            }
        }
        let max_tv = self
            .intron_transitions
            .iter()
            .zip(&self.exon_transitions)
            .map(|(p, q)| total_variation(p, q))
            .fold(0.0, f64::max);
        if max_tv < MIN_CLASS_TV {
            return Err(Error::SyntheticSpec(format!(
                "classes are too similar: max row TV distance {max_tv:.4} < {MIN_CLASS_TV}"
            )));
        }
        if let Some(ctx) = &self.start_context {
            if parse_bases(ctx)?.len() != self.markov_order {
                return Err(Error::SyntheticSpec(format!(
                    "start_context must have {} bases",
                    self.markov_order
                )));
            }
        }
        Ok(())
    }
}

fn sample_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave `acc` a hair under 1; fall back to the last non-zero cell.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

fn sample_chain<R: Rng>(
    rng: &mut R,
    rows: &[Vec<f64>],
    order: usize,
    len: usize,
    start: Option<&[Base]>,
) -> Vec<Base> {
    let mut bases: Vec<Base> = match start {
        Some(ctx) => ctx.to_vec(),
        None => (0..order).map(|_| Base::from_index(rng.gen_range(0..4))).collect(),
    };
    bases.truncate(len);
    let mask = (1usize << (2 * order)) - 1;
    let mut ctx = bases.iter().fold(0usize, |acc, b| ((acc << 2) | b.index()) & mask);
    while bases.len() < len {
        let next = sample_categorical(rng, &rows[ctx]);
        bases.push(Base::from_index(next));
        ctx = ((ctx << 2) | next) & mask;
    }
    bases
}

/// Draws `count_per_class` intron and exon sequences from the class chains.
/// Context rows are indexed by the previous `markov_order` bases read as a
/// base-4 number, most distant base most significant.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Corpus> {
    spec.validate()?;
    let start = spec.start_context.as_deref().map(parse_bases).transpose()?;
    let mut sequences = Vec::with_capacity(2 * spec.count_per_class);
    for (class_idx, (label, rows)) in [
        (Label::Intron, &spec.intron_transitions),
        (Label::Exon, &spec.exon_transitions),
    ]
    .into_iter()
    .enumerate()
    {
        for i in 0..spec.count_per_class {
            let mut rng = substream(spec.seed, Stream::Corpus, &[class_idx as u64, i as u64]);
            let bases = sample_chain(&mut rng, rows, spec.markov_order, spec.seq_length, start.as_deref());
            sequences.push(DnaSequence::new(format!("{label}_{i}"), bases, label)?);
        }
    }
    Ok(Corpus::new(sequences, Split::Train, Source::Synthetic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids_and_bases(seqs: &[DnaSequence]) -> Vec<(String, String)> {
        seqs.iter().map(|s| (s.id.clone(), s.to_bases_string())).collect()
    }

    #[test]
    fn parses_single_record() {
        let seqs = parse_fasta(">s1\nACGT\n".as_bytes(), NonAcgtPolicy::Reject).unwrap();
        assert_eq!(ids_and_bases(&seqs), vec![("s1".into(), "ACGT".into())]);
        assert_eq!(seqs[0].label, Label::Unknown);
    }

    #[test]
    fn concatenates_lines_and_splits_records() {
        let seqs = parse_fasta(">a desc\nAC\ngt\n>b\nTTTT\n".as_bytes(), NonAcgtPolicy::Reject).unwrap();
        assert_eq!(
            ids_and_bases(&seqs),
            vec![("a".into(), "ACGT".into()), ("b".into(), "TTTT".into())]
        );
    }

    #[test]
    fn reject_policy_names_the_record() {
        let err = parse_fasta(">x\nACGN\n".as_bytes(), NonAcgtPolicy::Reject).unwrap_err();
        assert!(matches!(&err, Error::DisallowedBase { id, ch: 'N', .. } if id == "x"), "{err}");
        let seqs = parse_fasta(">x\nACGN\n".as_bytes(), NonAcgtPolicy::Drop).unwrap();
        assert_eq!(seqs[0].to_bases_string(), "ACG");
    }

    #[test]
    fn malformed_fasta_errors() {
        assert!(parse_fasta("ACGT\n".as_bytes(), NonAcgtPolicy::Reject).is_err());
        assert!(parse_fasta(">a\n>b\nAC\n".as_bytes(), NonAcgtPolicy::Reject).is_err());
        assert!(parse_fasta(">a\nNNN\n".as_bytes(), NonAcgtPolicy::Drop).is_err());
    }

    #[test]
    fn reads_interval_csv() {
        let csv = "seq_id,start,end\nchr1,10,20\nchr1,0,5\nchr2,3,4\n";
        let map = read_intervals_csv(csv.as_bytes()).unwrap();
        assert_eq!(map["chr1"], vec![(0, 5), (10, 20)]);
        assert_eq!(map["chr2"], vec![(3, 4)]);
    }

    fn seq_of_len(n: usize) -> DnaSequence {
        DnaSequence::new("s", (0..n).map(Base::from_index).collect(), Label::Unknown).unwrap()
    }

    #[test]
    fn window_labels_exact_tiling() {
        let w = label_by_intervals(&seq_of_len(12), &[(0, 6)], 6).unwrap();
        let labels: Vec<_> = w.iter().map(|s| (s.id.as_str(), s.label)).collect();
        assert_eq!(labels, vec![("s:0-6", Label::Exon), ("s:6-12", Label::Intron)]);
    }

    #[test]
    fn straddling_windows_are_discarded() {
        assert!(label_by_intervals(&seq_of_len(12), &[(2, 8)], 6).unwrap().is_empty());
        let w = label_by_intervals(&seq_of_len(24), &[(0, 12)], 6).unwrap();
        assert_eq!(w.iter().filter(|s| s.label == Label::Exon).count(), 2);
        assert_eq!(w.iter().filter(|s| s.label == Label::Intron).count(), 2);
    }

    #[test]
    fn bad_intervals_are_rejected() {
        let s = seq_of_len(12);
        assert!(label_by_intervals(&s, &[(0, 6), (4, 8)], 3).is_err());
        assert!(label_by_intervals(&s, &[(6, 13)], 3).is_err());
        assert!(label_by_intervals(&s, &[(0, 6)], 13).is_err());
    }

    fn uniform_rows(order: usize) -> Vec<Vec<f64>> {
        vec![vec![0.25; 4]; 4usize.pow(order as u32)]
    }

    fn one_hot_rows(order: usize, b: Base) -> Vec<Vec<f64>> {
        let mut row = vec![0.0; 4];
        row[b.index()] = 1.0;
        vec![row; 4usize.pow(order as u32)]
    }

    #[test]
    fn degenerate_chain_emits_constant_sequence() {
        let spec = SyntheticSpec {
            markov_order: 1,
            intron_transitions: one_hot_rows(1, Base::A),
            exon_transitions: uniform_rows(1),
            seq_length: 30,
            count_per_class: 5,
            seed: 3,
            start_context: Some("A".into()),
        };
        let corpus = generate_synthetic(&spec).unwrap();
        assert_eq!(corpus.len(), 10);
        for s in corpus.sequences.iter().filter(|s| s.label == Label::Intron) {
            assert_eq!(s.to_bases_string(), "A".repeat(30));
        }
    }

    #[test]
    fn forced_alternation() {
        let mut rows = uniform_rows(1);
        rows[Base::A.index()] = vec![0.0, 0.0, 1.0, 0.0];
        rows[Base::G.index()] = vec![1.0, 0.0, 0.0, 0.0];
        let spec = SyntheticSpec {
            markov_order: 1,
            intron_transitions: rows,
            exon_transitions: one_hot_rows(1, Base::T),
            seq_length: 8,
            count_per_class: 2,
            seed: 1,
            start_context: Some("A".into()),
        };
        let corpus = generate_synthetic(&spec).unwrap();
        assert_eq!(corpus.sequences[0].to_bases_string(), "AGAGAGAG");
    }

    #[test]
    fn generation_is_deterministic_and_validated() {
        let spec = SyntheticSpec {
            markov_order: 2,
            intron_transitions: one_hot_rows(2, Base::C),
            exon_transitions: uniform_rows(2),
            seq_length: 50,
            count_per_class: 4,
            seed: 99,
            start_context: None,
        };
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());

        let mut bad = spec.clone();
        bad.intron_transitions[3] = vec![0.5, 0.5, 0.5, 0.0];
        assert!(matches!(generate_synthetic(&bad), Err(Error::SyntheticSpec(_))));

        let mut same = spec.clone();
        same.exon_transitions = same.intron_transitions.clone();
        assert!(generate_synthetic(&same).is_err());
    }

    #[test]
    fn empirical_transitions_converge() {
        let intron = vec![
            vec![0.6, 0.1, 0.1, 0.2],
            vec![0.1, 0.5, 0.3, 0.1],
            vec![0.25, 0.25, 0.25, 0.25],
            vec![0.05, 0.15, 0.3, 0.5],
        ];
        let spec = SyntheticSpec {
            markov_order: 1,
            intron_transitions: intron.clone(),
            exon_transitions: uniform_rows(1),
            seq_length: 10_000,
            count_per_class: 1,
            seed: 11,
            start_context: None,
        };
        let corpus = generate_synthetic(&spec).unwrap();
        let s = &corpus.sequences[0];
        assert_eq!(s.label, Label::Intron);
        let mut counts = [[0usize; 4]; 4];
        for w in s.bases().windows(2) {
            counts[w[0].index()][w[1].index()] += 1;
        }
        for (r, row) in counts.iter().enumerate() {
            let total: usize = row.iter().sum();
            for c in 0..4 {
                let freq = row[c] as f64 / total as f64;
                assert!((freq - intron[r][c]).abs() < 0.05, "row {r} col {c}: {freq}");
            }
        }
    }

    #[test]
    fn disjoint_splits() {
        let a = Corpus::new(vec![seq_of_len(3)], Split::Train, Source::Synthetic);
        let mut other = seq_of_len(3);
        other.id = "t".into();
        let b = Corpus::new(vec![other], Split::Test, Source::Synthetic);
        assert!(ensure_disjoint(&[&a, &b]).is_ok());
        assert!(ensure_disjoint(&[&a, &a.clone()]).is_err());
    }

    fn arb_sequence() -> impl Strategy<Value = DnaSequence> {
        let label = prop_oneof![Just(Label::Intron), Just(Label::Exon), Just(Label::Unknown)];
        ("[a-z][a-z0-9_]{0,8}", prop::collection::vec(0usize..4, 1..200), label).prop_map(|(id, idx, label)| {
            DnaSequence::new(id, idx.into_iter().map(Base::from_index).collect(), label).unwrap()
        })
    }

    proptest! {
        #[test]
        fn fasta_round_trip(seqs in prop::collection::vec(arb_sequence(), 1..8)) {
            let mut buf = Vec::new();
            write_fasta(&mut buf, &seqs).unwrap();
            let back = parse_fasta(buf.as_slice(), NonAcgtPolicy::Reject).unwrap();
            prop_assert_eq!(back, seqs);
        }

        #[test]
        fn windows_never_straddle(
            len in 20usize..200,
            window in 1usize..20,
            cuts in prop::collection::btree_set(0usize..200, 0..8),
        ) {
            let cuts: Vec<usize> = cuts.into_iter().filter(|&c| c <= len).collect();
            let intervals: Vec<Interval> = cuts.chunks_exact(2).map(|c| (c[0], c[1])).collect();
            let seq = seq_of_len(len);
            for w in label_by_intervals(&seq, &intervals, window).unwrap() {
                let (range, _) = w.id.split_once('-').map(|(a, b)| (a, b)).unwrap();
                let start: usize = range.rsplit(':').next().unwrap().parse().unwrap();
                let end = start + window;
                for &(s, e) in &intervals {
                    let overlap = start < e && s < end;
                    let contained = s <= start && end <= e;
                    prop_assert!(!overlap || contained);
                }
            }
        }
    }
}
