//! Forecasting engine for knockout football tournaments.
//!
//! Team strengths come from three sources (time-decayed bivariate Poisson
//! ratings, bookmaker consensus abilities, plus-minus player ratings), are
//! combined into per-match goal intensities by a lasso Poisson model and
//! pushed through a Monte Carlo tournament simulator.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod ids;
mod scalar;

pub mod consensus;
pub mod ingest;
pub mod metrics;
pub mod plus_minus;
pub mod poisson_rank;
pub mod predictor;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
pub use ids::{PlayerId, TeamId};
pub use scalar::Scalar;

pub type OutcomeProbs64 = metrics::OutcomeProbs<f64>;
pub type OutcomeProbs32 = metrics::OutcomeProbs<f32>;
