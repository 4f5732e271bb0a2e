//! Training, evaluation, the transformation audit, and the diversity grid.

mod audit;
mod check;
mod config;
mod eval;
mod grid;
mod model;
mod train;

pub use audit::{equivariance_audit, make_transform, AuditReport, TransformSpec};
pub use check::{toy_config, toy_grad_check};
pub use config::{derive_seed, parse_sbm_config, sbm_config_text, DataSource, RunConfig};
pub use eval::{
    accuracy, eval_threads, evaluate, run_episodes, sample_tasks, EpisodeResult, EvalReport,
};
pub use grid::{diversity_grid, grid_csv, CellOutcome, GridCell};
pub use model::{EpisodeLoss, Prepared, TegModel};
pub use train::{
    run_experiment, train, ExperimentOutcome, TrainLog, TrainOutcome, TrainRecord, ValidationRecord,
};
