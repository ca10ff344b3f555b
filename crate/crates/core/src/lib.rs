//! Multi-granular gated span identification.
//!
//! A sentence classifier's output gates a BiLSTM token tagger; both are
//! trained jointly. Around the model sit character-offset corpus handling,
//! lexicon features, span post-processing and ensembling, and the
//! overlap-normalized span F1 metric.

pub mod corpus;
pub mod error;
pub mod fixtures;
pub mod gradcheck;
pub mod lexfeatures;
pub mod mgmodel;
pub mod neuralcore;
pub mod scorer;
pub mod spanops;
pub mod trainer;

pub use error::{Error, ErrorClass, Result};
