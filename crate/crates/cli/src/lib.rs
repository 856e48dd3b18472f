//! Experiment runner for the `aerolink` binary: TOML configs, seeded parallel
//! runs, per-slot metrics and plot-ready tables.

pub mod config;
mod error;
pub mod experiment;
pub mod figures;

pub use config::{ExperimentConfig, SweepPoint};
pub use error::{Error, Result};
pub use experiment::{run_experiment, MetricsRecord, Summary};
pub use figures::{emit_figure_data, FigureKind};
