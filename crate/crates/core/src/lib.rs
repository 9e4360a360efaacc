//! Online contextual decision-making under resource constraints.
//!
//! Each round a prediction model maps a context to a reward vector and a
//! consumption matrix, a linear oracle picks a decision against the cost
//! `r - V (lambda + zeta * theta)`, and the dual prices `(lambda, theta)` are
//! updated by projected online mirror descent. Models are refit by empirical
//! risk minimization of a decision-aware surrogate (SPO+) or a least-squares
//! baseline, always under the freshest duals.

pub mod datagen;
pub mod duals;
pub mod error;
pub mod losses;
pub mod models;
pub mod oracles;
pub mod simulate;
pub mod types;
pub mod verify;

pub use error::{Error, Result};
pub use losses::LossKind;
pub use oracles::{DecisionOracle, GridPathRegion, KnapsackRegion, Region};
pub use types::{decision_cost, Arrival, CostVector, DualPair, Outcome, OutputLayout, Prediction};
