//! Configuration files, sweeps, verification and output.

pub mod config;
pub mod output;
pub mod sweep;
pub mod verify;

pub use config::{parse_config, parse_config_str, parse_rule, ParsedConfig};
pub use sweep::{parse_sweep, parse_sweep_str, run_sweep, SelectionMetric, SweepResult, SweepSpec};
pub use verify::{run_verification, Suite, VerificationRow};
