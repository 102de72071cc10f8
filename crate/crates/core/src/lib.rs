//! Offline simulation of clarifying-question conversations over a faceted
//! topic collection.
//!
//! The crate is organised bottom-up:
//!
//! - [`text`]: tokenization, the inverted index and the base scorers
//!   (Dirichlet query likelihood, BM25, RM3).
//! - [`data`]: the topic/facet/question/answer collection, facet qrels,
//!   multi-turn context expansion and cross-validation folds.
//! - [`retrieval`]: the interpolated conversational query model.
//! - [`questions`]: question-bank retrieval and its evaluation.
//! - [`qpp`], [`embed`], [`nn`]: predictor, embedding and network building blocks.
//! - [`selector`]: question selection policies and oracle bounds.
//! - [`metrics`]: ranking metrics and significance tests.
//! - [`experiment`]: fold-aware training and conversation simulation.
//! - [`synth`]: a seeded planted-facet collection used by tests and benches.

pub mod data;
pub mod embed;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod qpp;
pub mod questions;
pub mod retrieval;
pub mod selector;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
