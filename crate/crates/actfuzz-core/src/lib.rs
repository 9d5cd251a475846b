//! Coverage-guided fuzzing for numerical models.
//!
//! The crate implements a corpus-based fuzzing loop in which coverage is not
//! branch coverage but *activation novelty*: every evaluation of the model
//! under test yields a numeric coverage vector, and an input counts as new
//! coverage when its vector is farther than a threshold from every previously
//! seen vector (nearest-neighbor test in Euclidean distance). Inputs that
//! trigger a user-chosen error objective (non-finite values, disagreement
//! between a model and its half-precision twin, text-policy violations) are
//! collected as test cases.
//!
//! Everything here is deterministic given the campaign seed, and the crate is
//! `no_std`-compatible (`alloc` required); file formats, persistence, and the
//! command-line runner live in the companion `actfuzz` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod coverage;
pub mod engine;
pub mod half;
pub mod models;
pub mod mutate;
pub mod objective;
pub mod rng;
pub mod tensor;

mod math;

use core::fmt;

pub use coverage::{CoverageIndex, CoverageMode};
pub use engine::{
    fuzz, random_search, ChooserMode, Corpus, EngineError, FuzzConfig, FuzzOutcome, InputRecord,
    TestCase, Trace, TraceRow,
};
pub use mutate::{ImageInput, MutationConfig, Payload, TextInput};
pub use objective::Objective;
pub use rng::Rng;
pub use tensor::{Matrix, Vector};

/// Errors produced by the core operations.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two values that must share a shape did not.
    ShapeMismatch { expected: usize, got: usize },
    /// A standard deviation was negative.
    NegativeSigma { sigma: f32 },
    /// A class label was outside the model's logit range.
    LabelOutOfRange { label: usize, classes: usize },
    /// An operation that needs a non-empty corpus got an empty one.
    EmptyCorpus,
    /// An operation that needs non-empty input text got an empty one.
    EmptyText,
    /// A character was not part of the model's vocabulary.
    OutOfVocabulary { ch: char },
    /// A coverage vector did not match the index dimension.
    DimensionMismatch { expected: usize, got: usize },
    /// Training produced non-finite weights.
    TrainingDiverged { step: usize },
    /// A configuration value was out of its documented range.
    InvalidParameter { what: &'static str },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
            Error::NegativeSigma { sigma } => {
                write!(f, "standard deviation must be non-negative, got {sigma}")
            }
            Error::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            Error::EmptyCorpus => write!(f, "corpus is empty"),
            Error::EmptyText => write!(f, "text input is empty"),
            Error::OutOfVocabulary { ch } => {
                write!(f, "character {ch:?} is not in the vocabulary")
            }
            Error::DimensionMismatch { expected, got } => {
                write!(f, "coverage dimension mismatch: index holds {expected}, got {got}")
            }
            Error::TrainingDiverged { step } => {
                write!(f, "training diverged (non-finite weights) at step {step}")
            }
            Error::InvalidParameter { what } => write!(f, "invalid parameter: {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
