//! Deterministic desk-scale laboratory for studying test-set contamination
//! in ranking distillation: synthetic collections, BM25 retrieval, small
//! neural scorers, contamination injection, distillation losses, ranking
//! metrics with significance testing, and an end-to-end experiment driver.

pub mod collection;
pub mod config;
pub mod contaminate;
pub mod error;
pub mod experiment;
pub mod index;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
