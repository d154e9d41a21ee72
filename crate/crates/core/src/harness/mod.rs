//! Experiment orchestration: configs, seeded runs, sweeps, the median
//! baseline and metric files.

pub mod config;
pub mod experiment;
pub mod record;
pub mod sweep;

pub use config::{Baseline, Calibrate, CalibrationSpec, LossSpec, Oracle, RunConfig, Setting};
pub use experiment::{config_hash, resolve_parameters, run_experiment, run_with_parameters, Instance, Parameters};
pub use record::{emit_metrics, RoundMetrics, RunRecord};
pub use sweep::{detection_rate, parse_value, run_sweep, set_field, write_sweep, SweepCell, THREADS_ENV};
