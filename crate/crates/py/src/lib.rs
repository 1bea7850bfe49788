//! Python bindings: the EM-EP estimator, the array model helpers, the
//! experiment runner and the self-test.

use emep_core::experiment::{self, Algorithm};
use emep_core::signal::{build_dictionary, steering_vector};
use emep_core::{AngularGrid, ArrayGeometry, BaselineMode, CMatrix, CVector, EmConfig, SupportPrior};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn geometry(g: usize, d_over_lambda: Option<f64>) -> PyResult<ArrayGeometry> {
    match d_over_lambda {
        Some(d) => ArrayGeometry::new(g, d),
        None => ArrayGeometry::with_default_spacing(g),
    }
    .map_err(value_err)
}

fn matrix_from_rows(rows: &[Vec<Complex64>]) -> PyResult<CMatrix> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("pilot matrix rows have different lengths"));
    }
    Ok(CMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn rows_of(m: &CMatrix) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Result of one EM-EP run.
#[pyclass(module = "emep", frozen, get_all)]
struct Estimate {
    /// Channel estimate `A(theta) mu`, length G.
    h_hat: Vec<Complex64>,
    /// Posterior mean of the grid coefficients.
    mu: Vec<Complex64>,
    /// Posterior variances of the grid coefficients.
    sigma_diag: Vec<f64>,
    /// Posterior support probabilities.
    support_prob: Vec<f64>,
    /// Final grid angles in radians.
    grid: Vec<f64>,
    gamma: Vec<f64>,
    eta: f64,
    /// `(tau01, tau10)` for the clustered prior, `None` for the iid one.
    transition: Option<(f64, f64)>,
    p0: Option<f64>,
    em_iterations: usize,
    ep_iterations_total: usize,
    converged: bool,
    /// Per EM iteration: `(mu_change, xi_error_db, ep_iterations)`.
    trace: Vec<(f64, Option<f64>, usize)>,
}

#[pymethods]
impl Estimate {
    fn __repr__(&self) -> String {
        format!(
            "Estimate(G={}, M={}, em_iterations={}, converged={})",
            self.h_hat.len(),
            self.mu.len(),
            self.em_iterations,
            self.converged
        )
    }
}

/// Estimates the channel from `y = X h + w`.
///
/// `y` has length N, `x` is N rows of G complex entries, `m` is the grid
/// size. `baseline=True` selects the iid-Bernoulli support prior.
#[pyfunction]
#[pyo3(signature = (
    y, x, m, *, n_em = 100, n_ep = 100, eps_em = 1e-4, eps_ep = 1e-4, lambda0 = 0.3,
    tau01_0 = 0.1, snr0 = 100.0, grid_refinement = true, baseline = false, d_over_lambda = None
))]
#[allow(clippy::too_many_arguments)]
fn run_em_ep(
    py: Python<'_>,
    y: Vec<Complex64>,
    x: Vec<Vec<Complex64>>,
    m: usize,
    n_em: usize,
    n_ep: usize,
    eps_em: f64,
    eps_ep: f64,
    lambda0: f64,
    tau01_0: f64,
    snr0: f64,
    grid_refinement: bool,
    baseline: bool,
    d_over_lambda: Option<f64>,
) -> PyResult<Estimate> {
    let x = matrix_from_rows(&x)?;
    let geom = geometry(x.ncols(), d_over_lambda)?;
    let y = CVector::from_vec(y);
    let config = EmConfig {
        n_em,
        n_ep,
        eps_em,
        eps_ep,
        lambda0,
        tau10_0: tau01_0,
        snr0,
        grid_refinement,
        baseline_mode: if baseline { BaselineMode::IidBernoulli } else { BaselineMode::Markov },
    };
    let res = py
        .detach(|| emep_core::run_em_ep(&y, &x, m, &config, &geom))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let (transition, p0) = match res.xi_final.support {
        SupportPrior::Markov(t) => (Some((t.tau01(), t.tau10())), None),
        SupportPrior::Iid { p0 } => (None, Some(p0)),
    };
    Ok(Estimate {
        h_hat: res.h_hat.iter().copied().collect(),
        mu: res.posterior.mu.iter().copied().collect(),
        sigma_diag: res.posterior.sigma_diag(),
        support_prob: res.posterior.p.iter().map(|&l| 1.0 / (1.0 + (-l).exp())).collect(),
        grid: res.xi_final.grid.angles().to_vec(),
        gamma: res.xi_final.gamma.clone(),
        eta: res.xi_final.eta,
        transition,
        p0,
        em_iterations: res.em_iterations,
        ep_iterations_total: res.ep_iterations_total,
        converged: res.converged,
        trace: res.trace.iter().map(|t| (t.mu_change, t.xi_error_db, t.ep_iterations)).collect(),
    })
}

/// Steering vector of a G-antenna ULA towards `theta` (radians).
#[pyfunction]
#[pyo3(signature = (theta, g, d_over_lambda = None))]
fn steering(theta: f64, g: usize, d_over_lambda: Option<f64>) -> PyResult<Vec<Complex64>> {
    Ok(steering_vector(theta, &geometry(g, d_over_lambda)?).iter().copied().collect())
}

/// The initial M-point grid angles.
#[pyfunction]
fn initial_grid(m: usize) -> PyResult<Vec<f64>> {
    Ok(AngularGrid::initial(m).map_err(value_err)?.angles().to_vec())
}

/// Dictionary `A(theta)` as G rows of M entries.
#[pyfunction]
#[pyo3(signature = (angles, g, d_over_lambda = None))]
fn dictionary(angles: Vec<f64>, g: usize, d_over_lambda: Option<f64>) -> PyResult<Vec<Vec<Complex64>>> {
    let grid = AngularGrid::from_angles(angles).map_err(value_err)?;
    Ok(rows_of(&build_dictionary(&grid, &geometry(g, d_over_lambda)?)))
}

/// A parsed experiment configuration.
#[pyclass(module = "emep", frozen)]
struct ExperimentConfig {
    inner: experiment::ExperimentConfig,
}

#[pymethods]
impl ExperimentConfig {
    #[getter]
    fn sweep_name(&self) -> &'static str {
        self.inner.sweep_axis().name()
    }

    #[getter]
    fn sweep_values(&self) -> Vec<f64> {
        self.inner.sweep_points().iter().map(|p| self.inner.sweep_value(p)).collect()
    }

    #[getter]
    fn algorithms(&self) -> Vec<&'static str> {
        self.inner.algorithms.iter().map(|a| a.name()).collect()
    }

    #[getter]
    fn trials(&self) -> usize {
        self.inner.trials
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// Copy with `trials` and/or `seed` replaced.
    #[pyo3(signature = (*, trials = None, seed = None))]
    fn with_overrides(&self, trials: Option<usize>, seed: Option<u64>) -> PyResult<Self> {
        let mut inner = self.inner.clone();
        if let Some(t) = trials {
            inner.trials = t;
        }
        if let Some(s) = seed {
            inner.seed = s;
        }
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "ExperimentConfig(G={}, M={}, sweep={}, trials={}, seed={})",
            self.inner.g,
            self.inner.m,
            self.sweep_name(),
            self.inner.trials,
            self.inner.seed
        )
    }
}

/// Parses configuration text; raises `ValueError` with the line number.
#[pyfunction]
fn parse_config(text: &str) -> PyResult<ExperimentConfig> {
    Ok(ExperimentConfig { inner: experiment::parse_config(text).map_err(value_err)? })
}

/// Outcome of a sweep.
#[pyclass(module = "emep", frozen, get_all)]
struct ExperimentResult {
    /// Per-trial rows in the CLI's CSV format.
    csv: String,
    /// `(algorithm, sweep_value, nmse_db, trials, flagged)` per point.
    summary: Vec<(&'static str, f64, f64, usize, usize)>,
    flagged: usize,
}

/// Runs every algorithm/sweep point/trial on `jobs` threads.
#[pyfunction]
#[pyo3(signature = (config, jobs = 1))]
fn run_experiment(py: Python<'_>, config: &ExperimentConfig, jobs: usize) -> PyResult<ExperimentResult> {
    let out = py
        .detach(|| experiment::run_experiment(&config.inner, jobs))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(ExperimentResult {
        csv: out.to_csv_string().map_err(|e| PyRuntimeError::new_err(e.to_string()))?,
        summary: out
            .summary
            .iter()
            .map(|s| (s.algorithm.name(), s.sweep_value, s.nmse_db, s.trials, s.flagged))
            .collect(),
        flagged: out.flagged(),
    })
}

/// Algorithm names accepted by the `algorithms` config key.
#[pyfunction]
fn algorithm_names() -> Vec<&'static str> {
    [Algorithm::EmEp, Algorithm::EmEpB, Algorithm::EmEpNoGr].iter().map(|a| a.name()).collect()
}

/// Oracle agreement checks: `(name, value, threshold, passed)` each.
#[pyfunction]
fn selftest(py: Python<'_>) -> Vec<(&'static str, f64, f64, bool)> {
    py.detach(emep_core::selftest::run_selftest)
        .into_iter()
        .map(|c| (c.name, c.value, c.threshold, c.passed))
        .collect()
}

#[pymodule]
fn emep(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Estimate>()?;
    m.add_class::<ExperimentConfig>()?;
    m.add_class::<ExperimentResult>()?;
    m.add_function(wrap_pyfunction!(run_em_ep, m)?)?;
    m.add_function(wrap_pyfunction!(steering, m)?)?;
    m.add_function(wrap_pyfunction!(initial_grid, m)?)?;
    m.add_function(wrap_pyfunction!(dictionary, m)?)?;
    m.add_function(wrap_pyfunction!(parse_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(algorithm_names, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
