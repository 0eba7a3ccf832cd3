use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use stegodna_core::baselines::Baseline;
use stegodna_core::detector::{
    calibrate, scan, security_report, write_detections_csv, Calibration, LabelContext, Scorer, Windowed,
};
use stegodna_core::harness::{
    read_results_csv, run_in_dir, summarize, CorpusSource, DetectorKind, ExperimentConfig, RESULTS_FILE,
};
use stegodna_core::nn::{autoencode_train, classification_accuracy, train_classifier, SteganalysisModel, RNN_KIND};
use stegodna_core::seqio::{
    bases_to_string, generate_synthetic, parse_fasta, write_fasta, Base, Corpus, DnaSequence, Label, NonAcgtPolicy,
    Source, Split, SyntheticSpec,
};
use stegodna_core::stego::{embed_message, extract_message, CodonTable, StegoScheme};
use stegodna_core::Error;

#[derive(Parser)]
#[command(name = "stegodna", version, about = "DNA steganography and recurrent-network steganalysis")]
struct Cli {
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config as JSON; missing fields take desk-scale defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output file, or directory for `experiment`. Defaults to stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a labeled synthetic corpus as FASTA.
    Gen {
        /// Sequence length; overrides the config's synthetic spec.
        #[arg(long)]
        length: Option<usize>,
        /// Sequences per class.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train a detector on labeled FASTA and write its checkpoint.
    Train {
        #[arg(long, value_name = "FASTA")]
        r#in: PathBuf,
        #[arg(long, default_value = "rnn")]
        detector: DetectorKind,
        /// Training window length; 0 trains on whole sequences.
        #[arg(long)]
        window: Option<usize>,
    },
    /// Score clean sequences and write the detection band as JSON.
    Calibrate {
        #[arg(long, value_name = "CHECKPOINT")]
        model: PathBuf,
        #[arg(long, value_name = "FASTA")]
        r#in: PathBuf,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Flag sequences whose score leaves the calibrated band.
    Detect {
        #[arg(long, value_name = "CHECKPOINT")]
        model: PathBuf,
        #[arg(long, value_name = "JSON")]
        calibration: PathBuf,
        #[arg(long, value_name = "FASTA")]
        r#in: PathBuf,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Hide a message in every sequence of a FASTA file.
    Embed {
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long)]
        message: String,
        #[arg(long, value_name = "FASTA")]
        r#in: PathBuf,
        /// Where to write the `seq_id,position,original,replacement` report.
        #[arg(long, value_name = "CSV")]
        positions: Option<PathBuf>,
    },
    /// Recover a message of known length from every sequence.
    Extract {
        #[command(flatten)]
        scheme: SchemeArgs,
        /// Message length in bytes (characters for fivebit).
        #[arg(long, required_unless_present = "message")]
        length: Option<usize>,
        /// Expected message; its length is used and a mismatch is an error.
        #[arg(long)]
        message: Option<String>,
        #[arg(long, value_name = "FASTA")]
        r#in: PathBuf,
    },
    /// Run the length × rate × fold sweep into `--out`.
    Experiment,
    /// Summarize an experiment's results.csv.
    Report {
        /// Experiment directory or results.csv.
        #[arg(long)]
        r#in: PathBuf,
    },
    /// k-mer entropy and mutual information between clean and stego corpora.
    Entropy {
        #[arg(long, value_name = "FASTA")]
        clean: PathBuf,
        #[arg(long, value_name = "FASTA")]
        stego: PathBuf,
        #[arg(long, default_value_t = 1)]
        k: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeKind {
    Keybits,
    Ascii,
    Fivebit,
    Codon,
}

#[derive(Args)]
struct SchemeArgs {
    #[arg(long)]
    scheme: SchemeKind,
    #[arg(long, default_value_t = 3)]
    key_length: usize,
    /// Insertion offset for ascii and fivebit.
    #[arg(long, default_value_t = 0)]
    offset: usize,
}

impl SchemeArgs {
    fn scheme(&self) -> StegoScheme {
        match self.scheme {
            SchemeKind::Keybits => StegoScheme::Keybits { key_length: self.key_length },
            SchemeKind::Ascii => StegoScheme::Ascii { offset: self.offset },
            SchemeKind::Fivebit => StegoScheme::Fivebit { offset: self.offset },
            SchemeKind::Codon => StegoScheme::Codon { codon_table: CodonTable::standard() },
        }
    }
}

/// Failure carrying its exit code: 1 for configuration, 2 for runtime.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: e.into() }
}

fn is_config(e: &Error) -> bool {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::SyntheticSpec(_) => true,
        Error::Cell { source, .. } => is_config(source) || matches!(**source, Error::Capacity { .. }),
        _ => false,
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(e) if is_config(e) => 1,
            _ => 2,
        };
        Failure { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::new(e).into()
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Outcome<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(config_error)?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .with_context(|| format!("parsing config {}", path.display()))
                .map_err(config_error)?
        }
        None => ExperimentConfig::desk(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn read_fasta(path: &Path) -> Outcome<Vec<DnaSequence>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let seqs = parse_fasta(BufReader::new(file), NonAcgtPolicy::Reject)
        .with_context(|| format!("reading {}", path.display()))?;
    if seqs.is_empty() {
        return Err(anyhow!("{} holds no sequences", path.display()).into());
    }
    Ok(seqs)
}

/// Writes to `--out` when given, otherwise to stdout.
fn write_output(cli: &Cli, bytes: &[u8]) -> Outcome {
    match &cli.out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout().write_all(bytes).context("writing stdout")?,
    }
    Ok(())
}

fn required_out(cli: &Cli) -> Outcome<&Path> {
    cli.out.as_deref().ok_or_else(|| config_error(anyhow!("--out is required")))
}

enum Loaded {
    Rnn(SteganalysisModel),
    Baseline(Baseline),
}

impl Scorer for Loaded {
    fn score(&self, bases: &[Base]) -> stegodna_core::Result<f64> {
        match self {
            Loaded::Rnn(m) => m.score(bases),
            Loaded::Baseline(b) => b.score(bases),
        }
    }

    fn decision_threshold(&self) -> f64 {
        match self {
            Loaded::Rnn(m) => m.decision_threshold(),
            Loaded::Baseline(b) => b.decision_threshold(),
        }
    }
}

fn load_model(path: &Path) -> Outcome<Loaded> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let kind = serde_json::from_str::<serde_json::Value>(&text)
        .with_context(|| format!("parsing {}", path.display()))?
        .get("kind")
        .and_then(|k| k.as_str().map(str::to_owned))
        .ok_or_else(|| anyhow!("{} is not a checkpoint", path.display()))?;
    let model = if kind == RNN_KIND {
        Loaded::Rnn(SteganalysisModel::from_json(&text)?)
    } else {
        Loaded::Baseline(Baseline::from_json(&text)?)
    };
    Ok(model)
}

fn windows(seqs: &[DnaSequence], window: usize) -> Outcome<Vec<DnaSequence>> {
    if window == 0 {
        return Ok(seqs.to_vec());
    }
    let mut out = Vec::new();
    for s in seqs {
        for (i, w) in s.bases().chunks_exact(window).enumerate() {
            out.push(DnaSequence::new(format!("{}#w{i}", s.id), w.to_vec(), s.label)?);
        }
    }
    if out.is_empty() {
        return Err(config_error(anyhow!("every sequence is shorter than the {window}-nt window")));
    }
    Ok(out)
}

fn run(cli: &Cli) -> Outcome {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Gen { length, count } => {
            let mut spec = match &cfg.corpus {
                CorpusSource::Synthetic(s) => s.clone(),
                CorpusSource::Fasta { .. } => SyntheticSpec::desk(1800, 50, cfg.seed),
            };
            spec.seq_length = length.unwrap_or(spec.seq_length);
            spec.count_per_class = count.unwrap_or(spec.count_per_class);
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let corpus = generate_synthetic(&spec)?;
            let mut buf = Vec::new();
            write_fasta(&mut buf, &corpus.sequences)?;
            write_output(cli, &buf)?;
            if cli.verbose {
                eprintln!("generated {} sequences of {} nt", corpus.len(), spec.seq_length);
            }
        }
        Command::Train { r#in, detector, window } => {
            let out = required_out(cli)?;
            let seqs = read_fasta(r#in)?;
            if let Some(s) = seqs.iter().find(|s| s.label.class().is_none()) {
                return Err(config_error(anyhow!("sequence `{}` has no label=intron|exon header token", s.id)));
            }
            let windows = windows(&seqs, window.unwrap_or(cfg.window))?;
            let json = match *detector {
                DetectorKind::Rnn => {
                    let train = stegodna_core::nn::TrainConfig { seed: cfg.seed, ..cfg.train.clone() };
                    let corpus = Corpus::new(windows, Split::Train, Source::Synthetic);
                    let pre = autoencode_train(&corpus, &train)?;
                    let outcome = train_classifier(&corpus, Some(&pre), &train)?;
                    if cli.verbose {
                        eprintln!(
                            "trained on {} windows; training accuracy {:.4}",
                            corpus.len(),
                            classification_accuracy(&outcome.model, &corpus)?
                        );
                    }
                    outcome.model.to_json()?
                }
                kind => {
                    let bases: Vec<&[Base]> = windows.iter().map(|w| w.bases()).collect();
                    let labels: Vec<u8> = windows.iter().filter_map(|w| w.label.class()).collect();
                    let bcfg = stegodna_core::baselines::BaselineConfig { seed: cfg.seed, ..cfg.baseline.clone() };
                    let kind = kind.baseline().expect("non-rnn detectors are baselines");
                    Baseline::train(kind, &bases, &labels, &bcfg)?.to_json()?
                }
            };
            fs::write(out, json + "\n").with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Calibrate { model, r#in, window } => {
            let model = load_model(model)?;
            let seqs = read_fasta(r#in)?;
            let context = match (seqs.iter().all(|s| s.label == Label::Intron), seqs.iter().all(|s| s.label == Label::Exon)) {
                (true, _) => LabelContext::Intron,
                (_, true) => LabelContext::Exon,
                _ => LabelContext::Mixed,
            };
            let scorer = Windowed { inner: &model, window: window.unwrap_or(cfg.window) };
            let cal = calibrate(&scorer, &seqs, context)?;
            write_output(cli, (serde_json::to_string_pretty(&cal).context("serializing calibration")? + "\n").as_bytes())?;
        }
        Command::Detect { model, calibration, r#in, window } => {
            let model = load_model(model)?;
            let text = fs::read_to_string(calibration).with_context(|| format!("reading {}", calibration.display()))?;
            let cal: Calibration = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", calibration.display()))
                .map_err(config_error)?;
            let seqs = read_fasta(r#in)?;
            let scorer = Windowed { inner: &model, window: window.unwrap_or(cfg.window) };
            let detections = scan(&scorer, &cal, &seqs)?;
            let mut buf = Vec::new();
            write_detections_csv(&mut buf, &detections)?;
            write_output(cli, &buf)?;
            if cli.verbose {
                let flagged = detections.iter().filter(|d| d.flagged).count();
                eprintln!("flagged {flagged} of {}", detections.len());
            }
        }
        Command::Embed { scheme, message, r#in, positions } => {
            let scheme = scheme.scheme();
            scheme.validate()?;
            let seqs = read_fasta(r#in)?;
            let mut stego = Vec::with_capacity(seqs.len());
            let mut report = csv::Writer::from_writer(Vec::new());
            report.write_record(["seq_id", "position", "original", "replacement"]).context("writing positions")?;
            for s in &seqs {
                let r = embed_message(s, &scheme, message.as_bytes()).with_context(|| format!("embedding into `{}`", s.id))?;
                for &p in &r.modified_positions {
                    let original = s.bases().get(p).map_or("-".to_string(), |b| b.to_char().to_string());
                    let replacement = bases_to_string(&r.stego_sequence.bases()[p..p + 1]);
                    report
                        .write_record([s.id.as_str(), &p.to_string(), &original, &replacement])
                        .context("writing positions")?;
                }
                stego.push(r.stego_sequence);
            }
            let mut buf = Vec::new();
            write_fasta(&mut buf, &stego)?;
            write_output(cli, &buf)?;
            let report = report.into_inner().map_err(|e| anyhow!("writing positions: {e}"))?;
            if let Some(path) = positions {
                fs::write(path, report).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Extract { scheme, length, message, r#in } => {
            let scheme = scheme.scheme();
            scheme.validate()?;
            let len = length.or(message.as_ref().map(|m| m.len())).expect("clap requires one");
            let mut out = String::new();
            for s in &read_fasta(r#in)? {
                let bytes = extract_message(s.bases(), &scheme, len).with_context(|| format!("extracting from `{}`", s.id))?;
                if let Some(m) = message {
                    if m.as_bytes() != bytes.as_slice() {
                        return Err(Failure { code: 2, error: anyhow!("`{}` does not carry the expected message", s.id) });
                    }
                }
                out.push_str(&format!("{}\t{}\n", s.id, String::from_utf8_lossy(&bytes)));
            }
            write_output(cli, out.as_bytes())?;
        }
        Command::Experiment => {
            let dir = cli.out.clone().or_else(|| cfg.out_dir.clone()).ok_or_else(|| config_error(anyhow!("--out is required")))?;
            let outcome = run_in_dir(&cfg, &dir)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            if cli.verbose || !outcome.warnings.is_empty() {
                eprintln!(
                    "{} cells ({} reused), {} warnings, results in {}",
                    outcome.records.len(),
                    outcome.reused_cells,
                    outcome.warnings.len(),
                    dir.display()
                );
            }
        }
        Command::Report { r#in } => {
            let path = if r#in.is_dir() { r#in.join(RESULTS_FILE) } else { r#in.clone() };
            let file = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            let summary = summarize(&read_results_csv(file)?);
            let mut text = format!(
                "{:<10} {:<7} {:>6} {:>6} {:>22} {:>10} {:>10}\n",
                "detector", "region", "rate", "cells", "accuracy_diff", "detection", "fpr"
            );
            for r in &summary.rows {
                text.push_str(&format!(
                    "{:<10} {:<7} {:>6} {:>6} {:>22} {:>10.4} {:>10.4}\n",
                    r.detector.as_str(),
                    r.region.as_str(),
                    r.rate,
                    r.cells,
                    format!("{:.4} ± {:.4}", r.accuracy_diff_mean, r.accuracy_diff_std),
                    r.detection_rate_mean,
                    r.false_positive_rate_mean
                ));
            }
            if summary.na_rows > 0 {
                text.push_str(&format!("{} NA rows\n", summary.na_rows));
            }
            write_output(cli, text.as_bytes())?;
        }
        Command::Entropy { clean, stego, k } => {
            let clean = Corpus::new(read_fasta(clean)?, Split::Test, Source::Fasta);
            let stego = Corpus::new(read_fasta(stego)?, Split::Test, Source::Fasta);
            let report = security_report(&clean, &stego, *k)?;
            write_output(cli, (serde_json::to_string_pretty(&report).context("serializing report")? + "\n").as_bytes())?;
        }
    }
    Ok(())
}
