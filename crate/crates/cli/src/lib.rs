//! Configuration, figure presets and sweeps for the `dpsk` binary.

pub mod config;
pub mod presets;
pub mod sweep;

pub use config::{ConfigError, SweepConfig};
