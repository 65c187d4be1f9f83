//! Recovery studies for block-sparse tensor-train regression: a linear-quadratic
//! heat control value function, a Gaussian density, and externally generated
//! sample files.

pub mod control;
pub mod error;
pub mod io;
pub mod reference;
pub mod study;

pub use control::{discretize_heat_equation, solve_are, HeatSystem};
pub use error::{Error, Result};
pub use io::{emit_study, ingest_samples, read_samples, write_samples_csv, Format, RawSamples};
pub use reference::{gaussian_rank_one_oracle, reference_dof, ReferenceDof};
pub use study::{
    fit_space, quantile, run_gaussian_study, run_ingest_study, run_riccati_study, run_study,
    trial_seeds, ExperimentConfig, Problem, QuantileRow, StudyResult, TrialRecord, TrialSeeds,
};
