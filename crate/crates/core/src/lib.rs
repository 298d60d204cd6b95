//! Next-command prediction for interactive shells.
//!
//! The pipeline runs from raw session traces to a trained sequence model:
//! [`trace`] parses traces, [`normalize`] turns command lines into token
//! streams and a vocabulary, [`kb`] derives command synonyms from manual
//! pages, [`embed`] trains token embeddings, [`model`] holds the LSTM
//! classifier and [`eval`] the experiment protocol.

pub mod config;
pub mod embed;
pub mod error;
pub mod eval;
pub mod kb;
pub mod model;
pub mod normalize;
pub mod pipeline;
pub mod repl;
pub mod trace;

pub use error::{Error, Result};
