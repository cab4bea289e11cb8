//! Spectral survival analysis: Cox-type models fit by ADMM, where the
//! intrinsic-score step is the steady state of a score-dependent Markov chain.

pub mod cli;
pub mod data;
pub mod error;
pub mod estimators;
pub mod extensions;
pub mod likelihood;
pub mod metrics;
pub mod predictors;
pub mod seed;
pub mod spectral;
pub mod weights;

pub use error::{Error, Result};
