//! DNA steganography and sequence-learning steganalysis.
//!
//! * [`seqio`]: FASTA ingestion, window labeling, synthetic corpora.
//! * [`stego`]: message hiding and extraction schemes.
//! * [`nn`]: hand-written recurrent classifier with autoencoder pretraining.
//! * [`detector`]: calibration, the deviation-band decision rule, entropy diagnostics.
//! * [`baselines`]: k-mer feature classifiers and the chi-square frequency test.
//! * [`harness`]: cross-validated perturbation experiments and result tables.

pub mod baselines;
pub mod detector;
pub mod error;
pub mod harness;
pub mod nn;
pub mod rng;
pub mod seqio;
pub mod stego;

pub use error::{Error, Result};
