//! Cohort construction and outcome prediction over longitudinal
//! administrative event data.
//!
//! The crate covers the full workflow: diagnostic-code pattern matching and
//! temporal case definitions ([`codemap`]), event ingestion ([`events`]),
//! synthetic corpus generation with known ground truth ([`synth`]), fixed-
//! and flexible-observation-window cohort building ([`cohort`]), feature
//! aggregation ([`featurize`]), normalization / oversampling / splitting
//! ([`preprocess`]), logistic regression with Wald inference ([`glm`]),
//! tree ensembles ([`ensembles`]), threshold-free and Youden-calibrated
//! evaluation ([`eval`]), and preset end-to-end experiments ([`pipeline`]).
//!
//! Everything is deterministic given a seed: no wall-clock or OS entropy,
//! and parallel execution never changes output bytes.

#![forbid(unsafe_code)]

pub mod codemap;
pub mod cohort;
pub mod ensembles;
pub mod error;
pub mod eval;
pub mod events;
pub mod featurize;
pub mod glm;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
