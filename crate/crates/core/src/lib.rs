//! Builds corpora of negated sentences paired with affirmative
//! interpretations from parallel bitexts, and derives downstream training
//! data from them.

pub mod blend;
pub mod config;
pub mod corpus;
pub mod cue;
pub mod error;
pub mod manifest;
pub mod metrics;
pub mod mt;
pub mod nli;
pub mod pipeline;
pub mod router;
pub mod tokenize;

pub use error::{Error, Result};
