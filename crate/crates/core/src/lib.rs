//! Predicting a developer's next IDE command from the events that precede it.
//!
//! The crate is organized as a pipeline over interaction logs:
//!
//! 1. [`ingest`] reads JSON-lines event corpora and groups them into sessions.
//! 2. [`cleanse`] filters non-developer events, removes duplicate records,
//!    and collapses runs of repeats into single `"+"`-marked tokens.
//! 3. [`extract`] picks the target command classes and turns each in-target
//!    command occurrence into a (prefix, label) training row.
//! 4. [`featurize`] encodes prefixes as bag-of-n-gram counts or as a
//!    fixed-width one-hot window of the most recent tokens.
//! 5. [`models`] implements the four classifiers from scratch: Bernoulli and
//!    multinomial naive Bayes, softmax logistic regression, and a small
//!    feed-forward network with dropout.
//! 6. [`eval`] runs seeded k-fold cross-validation and computes pooled
//!    accuracy and ROC AUC summaries.
//! 7. [`synth`] generates Markov-chain corpora with known structure and a
//!    matching Bayes-optimal accuracy bound, for end-to-end validation.
//!
//! Everything downstream of ingestion is deterministic given its
//! configuration and seed: rerunning an evaluation reproduces the same
//! report byte for byte (timestamps aside).

pub mod cleanse;
pub mod error;
pub mod eval;
pub mod event;
pub mod extract;
pub mod featurize;
pub mod ingest;
pub mod models;
pub mod synth;

pub use error::{Error, Result};
