//! Config-driven studies and their reports.

pub mod config;
pub mod report;
mod studies;

pub use config::ExperimentConfig;
pub use report::{Relation, Status, StudyReport, Table, Verdict};
pub use studies::{
    fit_slope, run_deviation_study, run_kernel_validation, run_pinn_study, run_residual_decay_study,
    run_wide_limit_study, CLIPPING, CONVERGENCE, DERIVATIVES, DEVIATION, KERNEL_LLN, KERNEL_STRUCTURE, PINN,
    SPECTRAL_DECAY, STATIONARITY, WIDE_LIMIT,
};
