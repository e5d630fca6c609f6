//! Simulation designs and the replication harness.

pub mod config;
pub mod generate;
pub mod study;

pub use config::{ConfigError, Design, Effect, SimConfig};
pub use generate::{gen_binary, gen_continuous, gen_misspec, generate, instrument_slope, SimSample};
pub use study::{aggregate, run_replicate, run_study, Moments, Rate, ReplicateOutcome, SimReport};
