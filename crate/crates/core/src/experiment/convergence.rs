use std::io::Write;

use rayon::prelude::*;

use super::config::{Algorithm, ConfigError, ExperimentConfig};
use super::runner::{child_seed, guarded_estimate, realize, thread_pool};
use super::ExperimentError;
use crate::signal::ArrayGeometry;

pub const CONVERGENCE_HEADER: [&str; 7] =
    ["algorithm", "trial", "em_iter", "mu_change", "xi_error_db", "ep_iters", "error_flag"];

/// One EM iteration of one trial. A failed trial yields a single flagged row
/// with `em_iter = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub algorithm: Algorithm,
    pub trial: usize,
    /// 1-based.
    pub em_iter: usize,
    pub mu_change: f64,
    pub xi_error_db: Option<f64>,
    pub ep_iters: usize,
    pub error_flag: bool,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    pub fn flagged(&self) -> usize {
        self.rows.iter().filter(|r| r.error_flag).count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CONVERGENCE_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.algorithm.name().to_string(),
                r.trial.to_string(),
                r.em_iter.to_string(),
                r.mu_change.to_string(),
                r.xi_error_db.map(|v| v.to_string()).unwrap_or_default(),
                r.ep_iters.to_string(),
                u8::from(r.error_flag).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// EP iteration counts of `algorithm`'s unflagged rows with
    /// `em_iter > after`.
    pub fn ep_iterations_after(&self, algorithm: Algorithm, after: usize) -> Vec<usize> {
        self.rows
            .iter()
            .filter(|r| r.algorithm == algorithm && !r.error_flag && r.em_iter > after)
            .map(|r| r.ep_iters)
            .collect()
    }
}

/// Per-iteration EM traces at a single sweep point, for every trial and
/// algorithm. Uses the same realizations as [`super::run_experiment`].
pub fn report_convergence(cfg: &ExperimentConfig, jobs: usize) -> Result<ConvergenceReport, ExperimentError> {
    cfg.validate()?;
    let points = cfg.sweep_points();
    if points.len() != 1 {
        return Err(ConfigError { line: None, message: "convergence traces need a single sweep point".into() }.into());
    }
    let point = points[0];
    let value = cfg.sweep_value(&point);
    let geom = ArrayGeometry::new(cfg.g, cfg.d_over_lambda).map_err(|e| ExperimentError::Runtime(e.to_string()))?;
    let tasks: Vec<(Algorithm, usize)> =
        cfg.algorithms.iter().flat_map(|&a| (0..cfg.trials).map(move |t| (a, t))).collect();
    let rows: Vec<Vec<ConvergenceRow>> = thread_pool(jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|&(algorithm, trial)| {
                let est = realize(cfg, &geom, &point, child_seed(cfg.seed, value, trial))
                    .ok()
                    .and_then(|d| guarded_estimate(cfg, &geom, &d.y, &d.x, algorithm));
                match est {
                    Some(e) => e
                        .trace
                        .iter()
                        .enumerate()
                        .map(|(i, t)| ConvergenceRow {
                            algorithm,
                            trial,
                            em_iter: i + 1,
                            mu_change: t.mu_change,
                            xi_error_db: t.xi_error_db,
                            ep_iters: t.ep_iterations,
                            error_flag: false,
                        })
                        .collect(),
                    None => vec![ConvergenceRow {
                        algorithm,
                        trial,
                        em_iter: 0,
                        mu_change: f64::NAN,
                        xi_error_db: None,
                        ep_iters: 0,
                        error_flag: true,
                    }],
                }
            })
            .collect()
    });
    Ok(ConvergenceReport { rows: rows.into_iter().flatten().collect() })
}
