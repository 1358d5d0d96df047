//! Relation prediction for knowledge graphs.
//!
//! Each entity is represented by the pre-trained word vectors of its name
//! plus a structural vector learned from biased random walks over the
//! training graph. A (head, tail) pair becomes a fixed-length sequence of
//! rows that a bidirectional LSTM with attention pooling maps to one
//! independent probability per relation.
//!
//! The pipeline, bottom-up:
//!
//! - [`kg`]: triple parsing, vocabularies, adjacency, per-pair relation index
//! - [`node2vec`]: second-order walks and skip-gram embedding training
//! - [`text`]: word-vector loading, tokenization, OOV resolution, node rows
//! - [`predictor`]: the network, its exact gradients, training and inference
//! - [`eval`]: raw and filtered mean rank and Hits@1
//! - [`container`] and [`pipeline`]: artifact persistence and the CLI stages

pub mod config;
pub mod container;
pub mod error;
pub mod eval;
pub mod kg;
pub mod node2vec;
pub mod pipeline;
pub mod predictor;
pub mod synthetic;
pub mod text;

pub use error::{Error, Result};
