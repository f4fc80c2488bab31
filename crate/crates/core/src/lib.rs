//! Simulator and verification harness for Byzantine-robust distributed SGD
//! with local momentum.
//!
//! The crate provides analytic problem families (including the adversarial
//! lower-bound constructions), robust and oracle-adversarial aggregation rules,
//! Byzantine attacks, the training loop with Lyapunov tracking, and experiment
//! orchestration used by the `byzfloor` command line tool.

// Comparisons are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregators;
pub mod attacks;
pub mod config;
pub mod error;
pub mod experiments;
pub mod population;
pub mod problems;
pub mod rng;
pub mod trainer;
pub mod vector;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use population::{honest_mean, WorkerPopulation};
pub use rng::{Purpose, RngStream, StreamId};
pub use vector::DenseVector;
