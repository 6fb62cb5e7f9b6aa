//! Sigmoid contrastive pretraining for multi-label 12-lead ECG classification.

pub mod cli;
pub mod dataset;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod labels;
pub mod loss;
pub mod nn;
pub mod optim;
pub mod signal;
pub mod split;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
