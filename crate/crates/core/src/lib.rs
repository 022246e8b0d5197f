//! Core algorithms for triaging public code review requests.
//!
//! Everything here is pure computation over owned values and only needs an
//! allocator: tag normalization and fold splitting, code dependence graphs,
//! knowledge-term extraction, prompt assembly, the built-in mask-fill model,
//! answer mapping, and the evaluation metrics. File formats, XML ingest and
//! the command-line pipeline live in the `pcr` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod answer;
pub mod codegraph;
pub mod dataset;
pub mod error;
pub mod hash;
pub mod knowledge;
pub mod metrics;
pub mod model;
pub mod prompt;
pub mod text;

pub use error::{Error, Result};
