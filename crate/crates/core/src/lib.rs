//! Prediction by Partial Matching as a universal measure.
//!
//! The crate builds the PPM mixture over every Markov order, the predictor it
//! induces, stationary ergodic test sources with known entropy and
//! unpredictability rates, convergence diagnostics for forward estimators,
//! and a range coder that turns the measure into a working compressor.
//!
//! A guide with the mathematical background lives in the `book/` directory
//! of the repository; its code listings are compiled as doctests.

pub mod base;
pub mod coding;
pub mod error;
pub mod estimators;
pub mod ppm;
pub mod predict;
pub mod selftest;
pub mod sources;

pub use base::{
    eta, make_dist, tv_distance, Alphabet, Dist, LogProb, Rational, Seed, SeqModel, Symbol,
    SymbolSeq,
};
pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/measures.md")]
    mod measures {}
    #[doc = include_str!("../../../book/src/prediction.md")]
    mod prediction {}
    #[doc = include_str!("../../../book/src/sources.md")]
    mod sources {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/coding.md")]
    mod coding {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
