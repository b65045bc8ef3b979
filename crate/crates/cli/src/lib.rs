//! Experiment runner for the particle samplers in `spos-core`: flat-text
//! configs, CSV traces with seed-averaged summaries, SVG comparison plots,
//! self-checks and the bound calculator.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod summary;

pub use commands::{cmd_check, cmd_compare, cmd_constants, cmd_make_synthetic, cmd_run};
pub use config::{Algorithm, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use experiment::{Experiment, Trace};

/// Environment variable that fixes the worker-thread count.
pub const THREADS_ENV: &str = "SPOS_THREADS";

/// Sizes the global thread pool from [`THREADS_ENV`] if it is set.
pub fn init_threads() -> Result<(), String> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer (got '{value}')"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}
