//! Vision-aided mmWave blockage prediction and proactive handoff.
//!
//! The crate simulates a street with two camera-equipped mmWave basestations,
//! builds labelled image-proxy/beam sequences, trains a two-layer GRU link
//! status predictor (and a beam-only baseline) from scratch, and evaluates
//! blockage prediction and proactive handoff.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` rejects NaN too.

pub mod config;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod evalkit;
pub mod experiment;
pub mod geom;
pub mod handoff;
pub mod phy;
pub mod scene;
pub mod seqnet;
mod util;

pub use error::{Error, Result};
