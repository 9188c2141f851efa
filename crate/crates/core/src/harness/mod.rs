//! Config files, presets, recorded trajectories and experiment drivers.

pub mod config;
pub mod experiment;
pub mod record;

pub use config::{ExperimentConfig, GammaSpec, OUTPUT_DIR_ENV, PRESETS};
pub use experiment::{
    export_plotdata, refinement_check, run_experiment, run_sweep, simulate, Model, RefinementReport,
    RunOutcome, SweepSummary,
};
pub use record::{CsvTable, TrajectoryHeader};
