//! Corpus construction driven by estimated training-data quality.
//!
//! The crate builds a training corpus out of a large pool of noisy candidate
//! utterances by running a train–evaluate–regress loop: train a model on the
//! candidates, score each speaker's synthetic output, regress those scores
//! back onto utterance features, and keep the utterances (and the cleansing
//! variant of each utterance) that the regressor ranks highest.
//!
//! Everything is deterministic given a seed. A simulated training environment
//! ([`sim`]) with known ground truth stands in for a real trainer/evaluator so
//! the whole loop can be verified end-to-end at desk scale; real adapters plug
//! in through the [`engine::Trainer`] and [`engine::Evaluator`] traits.

pub mod engine;
mod error;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod prescreen;
pub mod regressor;
pub mod selection;
pub mod sim;

mod rng;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
