//! Microscopic intelligibility prediction at the level of lexical responses.
//!
//! Listener responses to a noisy word are a histogram over words. A
//! predictive model assigns probabilities to candidate responses and is
//! scored by the multinomial log-likelihood of the observed histogram,
//! together with top-1 accuracy, top-n coverage, Kendall tau-b and the
//! spoken-word truth gap. The crate also ships the reference baselines, a
//! CMU lexicon parser for homophone-aware matching, and a small log-linear
//! response model with its own Adam trainer.
//!
//! Numerical kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the usual double-precision instantiations.

pub mod baselines;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod lexicon;
pub mod predictions;
pub mod scalar;
pub mod toymodel;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar used by file formats and reports.
pub type Real = f64;

pub type ToyParams64 = toymodel::ToyParams<f64>;
pub type ToyParams32 = toymodel::ToyParams<f32>;
pub type Gradient64 = toymodel::Gradient<f64>;
pub type AdamState64 = trainer::AdamState<f64>;
pub type TrainOutcome64 = trainer::TrainOutcome<f64>;
pub type GridOutcome64 = trainer::GridOutcome<f64>;
