//! Confidence bounds for the optimal value of a stochastic program and for the
//! optimality gap of a candidate decision.
//!
//! The central procedure resamples the data many times, solves a sample
//! average approximation (SAA) on every resample and averages the optimal
//! values. The standard error of that bagged estimate is obtained from the
//! infinitesimal jackknife: the covariance between how often each observation
//! appears in a resample and the resampled optimal value. Batching and
//! single-replication bounds are provided as baselines, together with exact
//! U/V-statistic oracles and a Monte Carlo coverage harness.

#![allow(clippy::needless_range_loop)]

pub mod bounds;
pub mod cli;
pub mod data;
pub mod error;
pub mod gap;
pub mod harness;
pub mod lp;
pub mod oracle;
pub mod programs;
pub mod rng;
pub mod stats;

pub use data::Dataset;
pub use error::{Error, Result};

pub use bounds::{
    bag_bound, batching_bound, single_replication_bound, BagOutput, BoundReport, ResampleScheme,
};
pub use programs::{Decision, SaaSolution, StochasticProgram};
pub use rng::RngStream;
