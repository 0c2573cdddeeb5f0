//! Spatio-temporal infection risk maps for privacy-preserving contact tracing.
//!
//! Patients' presences are aggregated into a sparse per-cell risk map
//! ([`grid::build_risk_map`]); clients download the map and evaluate their own
//! trajectories locally ([`distribution::client_evaluate`]). The
//! [`simulation`] module compares risk-based and proximity-based tracing on a
//! synthetic crossing scenario, and [`refine`] updates the decay parameters
//! from test outcomes by MCMC.

// `!(a < b)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod distribution;
pub mod error;
pub mod grid;
pub mod refine;
pub mod risk;
pub mod roc;
pub mod simulation;
pub mod tile;

pub use error::{Error, Result};
pub use grid::{build_risk_map, discretize, CellIndex, GridSpec, PathSample, RiskMap};
pub use risk::{cell_risk, pairwise_risk, trajectory_risk, PresenceCell, RiskParams, Trajectory};
