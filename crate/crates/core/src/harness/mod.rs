//! Evaluation metrics and Monte-Carlo sweeps.

mod metrics;
mod sweep;

pub use metrics::{error_distance, error_normal, error_reprojection, DistanceScale};
pub use sweep::{
    default_methods, format_significant, mean_std, run_sweep, run_trial, run_trials, Method,
    MethodConfig, SweepAxis, SweepRow, SweepSpec, SweepTable, TrialGrid, TrialResult, CSV_HEADER,
};
