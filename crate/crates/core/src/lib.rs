//! Decoding-time visual token pruning with attention-shift detection and
//! context-preserving token swap, simulated over a synthetic attention
//! substrate.
//!
//! The pipeline: a [`scenario`] supplies per-step queries over a bank of visual
//! keys; [`prefill`] keeps a budget of tokens at step 0; during decoding
//! [`detect`] compares the attention over the kept tokens with the prefill
//! anchor and, when it drifts, [`swap`] re-scores the whole bank and widens the
//! visible set for a while. [`engine`] runs that loop and records traces that
//! [`analytics`] turns into diagnostics.

pub mod analytics;
pub mod config;
pub mod detect;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod prefill;
pub mod scenario;
pub mod swap;
pub mod trace;

pub use error::{Error, Result};
