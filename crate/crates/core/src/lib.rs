pub mod classifier;
pub mod cli;
pub mod cluster;
pub mod error;
pub mod features;
pub mod ingest;
pub mod logit;
pub mod numcore;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
