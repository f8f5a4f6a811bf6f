//! Plumbing behind the `ppmu` binary: experiment specs and runner, symbol
//! file I/O and fixed-width float formatting.

pub mod error;
pub mod experiment;
pub mod format;
pub mod symbols;

pub use error::{CliError, Result};
