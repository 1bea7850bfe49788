//! Outer EM loop: learns the support prior, slab and noise precisions and the
//! angular grid from the EP posterior, then maps the coefficient estimate
//! back to the physical channel.

use std::f64::consts::FRAC_PI_2;

use crate::ep::{relative_change, run_ep, EpConfig, EpState, GlobalPosterior};
use crate::error::{Error, Result};
use crate::linalg::{matmul, sigmoid, CMatrix, CVector};
use crate::model::{ModelParams, SupportPrior, Transition, PRECISION_CAP};
use crate::signal::{build_dictionary, dictionary_derivative, AngularGrid, ArrayGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineMode {
    /// Clustered support with learned transition probabilities (EM-EP).
    Markov,
    /// iid Bernoulli support with a learned activity `p0` (EM-EP-B).
    IidBernoulli,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub n_em: usize,
    pub n_ep: usize,
    pub eps_em: f64,
    pub eps_ep: f64,
    /// Initial steady-state activity.
    pub lambda0: f64,
    /// Initial on-to-off transition probability; the off-to-on probability
    /// follows from `lambda0`.
    pub tau10_0: f64,
    /// Initial SNR guess (linear) used for `eta` and `gamma`.
    pub snr0: f64,
    pub grid_refinement: bool,
    pub baseline_mode: BaselineMode,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            n_em: 100,
            n_ep: 100,
            eps_em: 1e-4,
            eps_ep: 1e-4,
            lambda0: 0.3,
            tau10_0: 0.1,
            snr0: 100.0,
            grid_refinement: true,
            baseline_mode: BaselineMode::Markov,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_em == 0 || self.n_ep == 0 {
            return Err(Error::InvalidParameter("iteration limits must be positive".into()));
        }
        for (name, v) in [("eps_em", self.eps_em), ("eps_ep", self.eps_ep), ("snr0", self.snr0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lambda0 > 0.0 && self.lambda0 < 1.0) {
            return Err(Error::InvalidParameter("lambda0 must lie in (0, 1)".into()));
        }
        if !(self.tau10_0 > 0.0 && self.tau10_0 < 1.0) {
            return Err(Error::InvalidParameter("tau10_0 must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn ep_config(&self) -> EpConfig {
        EpConfig { max_iterations: self.n_ep, tolerance: self.eps_ep, ..EpConfig::default() }
    }
}

/// Diagnostics for one EM iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationTrace {
    /// `||mu^{l+1} - mu^l|| / ||mu^l||` (infinite on the first iteration).
    pub mu_change: f64,
    /// `10 log10(||xi^{l+1} - xi^l||^2 / ||xi^l||^2)`; `None` when the
    /// iteration ended the loop without a parameter update.
    pub xi_error_db: Option<f64>,
    pub ep_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct EstimateResult {
    /// `A(theta) mu` on the grid the final posterior was computed with.
    pub h_hat: CVector,
    pub posterior: GlobalPosterior,
    pub xi_final: ModelParams,
    pub em_iterations: usize,
    pub ep_iterations_total: usize,
    pub converged: bool,
    pub trace: Vec<IterationTrace>,
}

/// Expected transition-count ratios from the support probabilities.
///
/// Returns `(tau01, tau10)` with `tau01 = P(1|0)` estimated by
/// `sum s_m (1 - s_{m-1}) / sum (1 - s_{m-1})` and `tau10 = P(0|1)` by
/// `sum s_{m-1} (1 - s_m) / sum s_{m-1}`, `s_m = sigmoid(p_m)`, both
/// clamped. A zero denominator (support all on or all off) maps to the
/// lower clamp.
pub fn update_tau(p: &[f64]) -> Result<Transition> {
    if p.len() < 2 {
        return Err(Error::InvalidParameter("transition update needs at least two coefficients".into()));
    }
    let s: Vec<f64> = p.iter().map(|&v| sigmoid(v)).collect();
    let (mut on_off, mut on, mut off_on, mut off) = (0.0, 0.0, 0.0, 0.0);
    for w in s.windows(2) {
        let (prev, next) = (w[0], w[1]);
        on_off += prev * (1.0 - next);
        on += prev;
        off_on += next * (1.0 - prev);
        off += 1.0 - prev;
    }
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    Transition::new(ratio(off_on, off), ratio(on_off, on))
}

/// `gamma_m = 1 / (Sigma_mm + |mu_m|^2)`, capped at [`PRECISION_CAP`].
pub fn update_gamma(mu: &CVector, sigma_diag: &[f64]) -> Vec<f64> {
    mu.iter()
        .zip(sigma_diag)
        .map(|(m, &s)| {
            let second = s.max(0.0) + m.norm_sqr();
            if second > 1.0 / PRECISION_CAP {
                1.0 / second
            } else {
                PRECISION_CAP
            }
        })
        .collect()
}

/// `||y - Phi mu||^2 + tr(Phi Sigma Phi^H)`.
pub fn expected_residual(y: &CVector, phi: &CMatrix, mu: &CVector, sigma: &CMatrix) -> f64 {
    let resid = (y - phi * mu).norm_squared();
    let phi_sigma = matmul(phi, sigma);
    let trace: f64 = phi_sigma.iter().zip(phi.iter()).map(|(a, b)| (a * b.conj()).re).sum();
    resid + trace
}

/// `eta = N / (||y - Phi mu||^2 + tr(Phi Sigma Phi^H))`, capped.
pub fn update_eta(y: &CVector, phi: &CMatrix, mu: &CVector, sigma: &CMatrix) -> f64 {
    let denom = expected_residual(y, phi, mu, sigma);
    let n = y.len() as f64;
    if denom > n / PRECISION_CAP {
        n / denom
    } else {
        PRECISION_CAP
    }
}

/// Grid objective `||y - X A(theta) mu||^2 + tr(X A(theta) Sigma A(theta)^H X^H)`.
pub fn grid_objective(
    y: &CVector,
    x: &CMatrix,
    grid: &AngularGrid,
    geom: &ArrayGeometry,
    mu: &CVector,
    sigma: &CMatrix,
) -> f64 {
    let phi = matmul(x, &build_dictionary(grid, geom));
    expected_residual(y, &phi, mu, sigma)
}

/// Gradient of [`grid_objective`] with respect to each grid angle.
pub fn grid_gradient(
    y: &CVector,
    x: &CMatrix,
    grid: &AngularGrid,
    geom: &ArrayGeometry,
    mu: &CVector,
    sigma: &CMatrix,
) -> Vec<f64> {
    let phi = matmul(x, &build_dictionary(grid, geom));
    let dphi = matmul(x, &dictionary_derivative(grid, geom));
    grid_gradient_with(y, &phi, &dphi, mu, sigma)
}

fn grid_gradient_with(
    y: &CVector,
    phi: &CMatrix,
    dphi: &CMatrix,
    mu: &CVector,
    sigma: &CMatrix,
) -> Vec<f64> {
    let m_len = phi.ncols();
    let residual = y - phi * mu;
    // column m of Phi Sigma is sum_n Sigma_{n,m} X a(theta_n)
    let phi_sigma = matmul(phi, sigma);
    (0..m_len)
        .map(|m| {
            let b = phi.column(m);
            let db = dphi.column(m);
            let alpha1 = mu[m].norm_sqr() + sigma[(m, m)].re;
            let cross = phi_sigma.column(m) - b * sigma[(m, m)];
            // y minus every coefficient's contribution except m's
            let y_without = &residual + b * mu[m];
            let alpha2 = cross - y_without * mu[m].conj();
            2.0 * alpha1 * db.dotc(&b).re + 2.0 * db.dotc(&alpha2).re
        })
        .collect()
}

/// Sign step: `theta_m -= cell_m / 100 * sign(gradient_m)`.
///
/// Zero components stay put. Moves that would leave `[-pi/2, pi/2]` or break
/// strict monotonicity are rolled back.
pub fn refine_grid(grid: &AngularGrid, gradient: &[f64]) -> Result<AngularGrid> {
    if gradient.len() != grid.len() {
        return Err(Error::Dimension("gradient length differs from grid".into()));
    }
    let old = grid.angles();
    let cells = grid.cells();
    let mut next: Vec<f64> = old
        .iter()
        .zip(cells)
        .zip(gradient)
        .map(|((&t, &r), &g)| {
            let step = if g > 0.0 {
                -r / 100.0
            } else if g < 0.0 {
                r / 100.0
            } else {
                0.0
            };
            let moved = t + step;
            if moved.abs() > FRAC_PI_2 {
                t
            } else {
                moved
            }
        })
        .collect();
    // Roll back both ends of any pair that crossed; the original grid is
    // strictly increasing so this terminates.
    loop {
        let mut clean = true;
        for i in 0..next.len().saturating_sub(1) {
            if next[i + 1] <= next[i] {
                next[i] = old[i];
                next[i + 1] = old[i + 1];
                clean = false;
            }
        }
        if clean {
            break;
        }
    }
    Ok(AngularGrid::with_cells(next, cells.to_vec()))
}

/// Initial parameters: `lambda0`-stationary chain (or `p0 = lambda0`),
/// `eta = gamma_m = (||y||^2 / ((snr0 + 1) N))^{-1}`, arcsine grid.
pub fn initial_params(y: &CVector, m: usize, config: &EmConfig) -> Result<ModelParams> {
    let n = y.len() as f64;
    let energy = y.norm_squared();
    let precision = if energy > 0.0 {
        ((config.snr0 + 1.0) * n / energy).min(PRECISION_CAP)
    } else {
        PRECISION_CAP
    };
    let support = match config.baseline_mode {
        BaselineMode::Markov => SupportPrior::Markov(Transition::with_steady_state(config.lambda0, config.tau10_0)?),
        BaselineMode::IidBernoulli => SupportPrior::Iid { p0: config.lambda0 },
    };
    Ok(ModelParams { support, gamma: vec![precision; m], eta: precision, grid: AngularGrid::initial(m)? })
}

fn xi_error_db(new: &ModelParams, old: &ModelParams) -> f64 {
    let a = new.as_vector();
    let b = old.as_vector();
    let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
    let base: f64 = b.iter().map(|v| v * v).sum();
    10.0 * (diff / base).log10()
}

/// Full EM-EP estimate of the channel `h` from `y = X h + n`.
///
/// `m` is the number of grid points. The support prior follows
/// `config.baseline_mode`.
pub fn run_em_ep(
    y: &CVector,
    x: &CMatrix,
    m: usize,
    config: &EmConfig,
    geom: &ArrayGeometry,
) -> Result<EstimateResult> {
    config.validate()?;
    if x.nrows() != y.len() || x.ncols() != geom.num_antennas {
        return Err(Error::Dimension(format!(
            "X is {}x{}, y has {} entries, array has {} antennas",
            x.nrows(),
            x.ncols(),
            y.len(),
            geom.num_antennas
        )));
    }
    if config.baseline_mode == BaselineMode::Markov && m < 2 {
        return Err(Error::InvalidParameter("Markov support needs at least two grid points".into()));
    }
    let ep_config = config.ep_config();
    let mut xi = initial_params(y, m, config)?;
    let mut state: Option<EpState> = None;
    let mut previous_mu: Option<CVector> = None;
    let mut trace = Vec::new();
    let mut ep_total = 0;
    let converged;

    let posterior = loop {
        let dict = build_dictionary(&xi.grid, geom);
        let phi = matmul(x, &dict);
        let out = run_ep(y, &phi, &xi, &ep_config, state.take())?;
        ep_total += out.iterations;
        state = Some(out.state);
        let post = out.posterior;

        let mu_change = previous_mu.as_ref().map_or(f64::INFINITY, |prev| relative_change(&post.mu, prev));
        let last = trace.len() + 1 == config.n_em;
        if mu_change < config.eps_em || last {
            converged = mu_change < config.eps_em;
            trace.push(IterationTrace { mu_change, xi_error_db: None, ep_iterations: out.iterations });
            break post;
        }

        let support = match xi.support {
            SupportPrior::Markov(_) => SupportPrior::Markov(update_tau(&post.p)?),
            SupportPrior::Iid { .. } => {
                let mean = post.p.iter().map(|&p| sigmoid(p)).sum::<f64>() / m as f64;
                SupportPrior::Iid { p0: mean.clamp(crate::model::TAU_MIN, 1.0 - crate::model::TAU_MIN) }
            }
        };
        let gamma = update_gamma(&post.mu, &post.sigma_diag());
        let eta = update_eta(y, &phi, &post.mu, &post.sigma);
        let grid = if config.grid_refinement {
            let dphi = matmul(x, &dictionary_derivative(&xi.grid, geom));
            let grad = grid_gradient_with(y, &phi, &dphi, &post.mu, &post.sigma);
            refine_grid(&xi.grid, &grad)?
        } else {
            xi.grid.clone()
        };
        let next = ModelParams { support, gamma, eta, grid };
        trace.push(IterationTrace {
            mu_change,
            xi_error_db: Some(xi_error_db(&next, &xi)),
            ep_iterations: out.iterations,
        });
        xi = next;
        previous_mu = Some(post.mu.clone());
    };

    let dict = build_dictionary(&xi.grid, geom);
    let h_hat = &dict * &posterior.mu;
    Ok(EstimateResult {
        h_hat,
        em_iterations: trace.len(),
        ep_iterations_total: ep_total,
        converged,
        trace,
        posterior,
        xi_final: xi,
    })
}

/// EM-EP with an iid Bernoulli support prior in place of the Markov chain.
pub fn run_em_ep_b(
    y: &CVector,
    x: &CMatrix,
    m: usize,
    config: &EmConfig,
    geom: &ArrayGeometry,
) -> Result<EstimateResult> {
    let config = EmConfig { baseline_mode: BaselineMode::IidBernoulli, ..config.clone() };
    run_em_ep(y, x, m, &config, geom)
}
