use rayon::prelude::*;

use super::config::RunConfig;
use super::eval::EvalReport;
use super::model::Prepared;
use super::train::run_experiment;
use crate::error::{Result, TegError};

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Done(EvalReport),
    /// The restricted pool cannot hold one training episode.
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub class_fraction: f64,
    pub label_availability: f64,
    pub outcome: CellOutcome,
}

/// Trains and evaluates one model per (class fraction, label availability)
/// cell. Every cell shares the seed schedule of `cfg` and is evaluated on the
/// full novel pool.
pub fn diversity_grid(
    cfg: &RunConfig,
    data: &Prepared,
    fractions: &[f64],
    availabilities: &[f64],
) -> Result<Vec<GridCell>> {
    let cells: Vec<(f64, f64)> = fractions
        .iter()
        .flat_map(|&f| availabilities.iter().map(move |&a| (f, a)))
        .collect();
    cells
        .par_iter()
        .map(|&(f, a)| {
            let cell_cfg = RunConfig {
                class_fraction: f,
                label_availability: a,
                ..cfg.clone()
            };
            let outcome = match run_experiment(&cell_cfg, data) {
                Ok(out) => CellOutcome::Done(out.report),
                Err(e @ TegError::PoolTooSmall { .. }) => CellOutcome::Infeasible(e.to_string()),
                Err(e) => return Err(e),
            };
            Ok(GridCell {
                class_fraction: f,
                label_availability: a,
                outcome,
            })
        })
        .collect()
}

/// Long-format table, one row per cell; infeasible cells carry the marker
/// `infeasible` in place of numbers.
pub fn grid_csv(cells: &[GridCell]) -> String {
    let mut out = String::from("class_fraction,label_availability,mean,std,runs\n");
    for c in cells {
        match &c.outcome {
            CellOutcome::Done(r) => out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.class_fraction,
                c.label_availability,
                r.mean,
                r.std,
                r.accuracies.len()
            )),
            CellOutcome::Infeasible(_) => out.push_str(&format!(
                "{},{},infeasible,infeasible,0\n",
                c.class_fraction, c.label_availability
            )),
        }
    }
    out
}
