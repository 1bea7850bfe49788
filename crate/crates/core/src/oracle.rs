//! Brute-force reference computations the closed-form EP updates are checked
//! against: 2-D quadrature of the tilted spike-and-slab moments, literal
//! enumeration of the pairwise chain factor, and the exact posterior by
//! summing over every support pattern.

use std::f64::consts::PI;

use rand::Rng;

use crate::ep::{Cavity, HybridMoments};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_cholesky, log_sum_exp2, sigmoid, CMatrix, CVector, C64};
use crate::model::{ModelParams, SupportPrior, Transition};
use crate::signal::complex_normal;

/// Largest grid the exhaustive posterior accepts (2^12 supports).
pub const EXHAUSTIVE_MAX_M: usize = 12;

/// Tensor trapezoid rule on a square box around the slab product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Half-width of the box in standard deviations.
    pub extent: f64,
    /// Nodes per axis; must be odd so the centre is a node.
    pub nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { extent: 8.0, nodes: 401 }
    }
}

/// Tilted moments in probability space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedMoments {
    /// `E[z]`.
    pub prob_on: f64,
    pub mean: C64,
    pub var: f64,
}

impl TiltedMoments {
    pub fn from_hybrid(h: &HybridMoments) -> Self {
        Self { prob_on: sigmoid(h.p_new), mean: h.mu_new, var: h.var_new }
    }

    /// Largest absolute difference over the three moments.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.prob_on - other.prob_on)
            .abs()
            .max((self.mean - other.mean).norm())
            .max((self.var - other.var).abs())
    }
}

/// Moments of `[z CN(w; 0, 1/gamma) + (1 - z) delta(w)] CN(w; mu, sigma) Bern(z; sigmoid(p))`.
///
/// The spike contributes a point mass at zero whose weight is evaluated
/// directly; the slab integral is taken numerically over the real and
/// imaginary parts of `w`, with all weights kept relative to the integrand's
/// peak so extreme cavities do not underflow.
pub fn quad_hybrid_moments(cav: &Cavity, gamma: f64, spec: &QuadratureSpec) -> Result<TiltedMoments> {
    if spec.nodes < 3 || spec.nodes % 2 == 0 {
        return Err(Error::InvalidParameter(format!("quadrature needs an odd node count >= 3, got {}", spec.nodes)));
    }
    if !(cav.sigma > 0.0 && gamma > 0.0 && spec.extent > 0.0) {
        return Err(Error::InvalidParameter("cavity variance, slab precision and extent must be positive".into()));
    }
    let slab_var = 1.0 / gamma;
    // Box placement only: centre and width of the product density.
    let post_var = 1.0 / (1.0 / cav.sigma + gamma);
    let centre = cav.mu * (post_var / cav.sigma);
    let std = (post_var / 2.0).sqrt();
    let half = spec.extent * std;
    let h = 2.0 * half / (spec.nodes - 1) as f64;

    let ln_integrand = |w: C64| -> f64 {
        -(PI * slab_var).ln() - w.norm_sqr() / slab_var - (PI * cav.sigma).ln() - (w - cav.mu).norm_sqr() / cav.sigma
    };
    let ln_peak = ln_integrand(centre);
    let (mut s0, mut s1, mut s2) = (0.0, C64::new(0.0, 0.0), 0.0);
    for i in 0..spec.nodes {
        let wi = if i == 0 || i == spec.nodes - 1 { 0.5 } else { 1.0 };
        let re = centre.re - half + i as f64 * h;
        for j in 0..spec.nodes {
            let wj = if j == 0 || j == spec.nodes - 1 { 0.5 } else { 1.0 };
            let w = C64::new(re, centre.im - half + j as f64 * h);
            let f = wi * wj * (ln_integrand(w) - ln_peak).exp();
            s0 += f;
            s1 += w * f;
            s2 += w.norm_sqr() * f;
        }
    }
    let area = h * h;
    // ln of the slab mass, relative scale restored.
    let ln_slab = ln_peak + (s0 * area).ln();
    let ln_on = -(-cav.p).exp().ln_1p() + ln_slab;
    let ln_off = -cav.p.exp().ln_1p() + (-(PI * cav.sigma).ln() - cav.mu.norm_sqr() / cav.sigma);
    let ln_z = log_sum_exp2(ln_on, ln_off);
    let prob_on = (ln_on - ln_z).exp();
    let mean = s1 / s0 * prob_on;
    let second = s2 / s0 * prob_on;
    Ok(TiltedMoments { prob_on, mean, var: (second - mean.norm_sqr()).max(0.0) })
}

/// Normalized 4-outcome table of `q\R(z_{m-1}) p(z_m | z_{m-1}) q\F(z_m)`,
/// evaluated term by term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumeratedPair {
    /// `table[i][j] = P(z_{m-1} = i, z_m = j)`.
    pub table: [[f64; 2]; 2],
    pub mean_prev: f64,
    pub mean_next: f64,
}

pub fn enumerate_bivariate(prev_cavity: f64, next_cavity: f64, tr: &Transition) -> EnumeratedPair {
    let bern = |logit: f64, z: usize| if z == 1 { sigmoid(logit) } else { 1.0 - sigmoid(logit) };
    let trans = |from: usize, to: usize| match (from, to) {
        (0, 1) => tr.tau01(),
        (0, _) => 1.0 - tr.tau01(),
        (1, 0) => tr.tau10(),
        _ => 1.0 - tr.tau10(),
    };
    let mut table = [[0.0; 2]; 2];
    let mut total = 0.0;
    for (i, row) in table.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = bern(prev_cavity, i) * trans(i, j) * bern(next_cavity, j);
            total += *cell;
        }
    }
    for row in table.iter_mut() {
        for cell in row.iter_mut() {
            *cell /= total;
        }
    }
    EnumeratedPair {
        table,
        mean_prev: table[1][0] + table[1][1],
        mean_next: table[0][1] + table[1][1],
    }
}

#[derive(Debug, Clone)]
pub struct ExactPosterior {
    /// `E[w | y]`.
    pub mean: CVector,
    /// `P(z_m = 1 | y)`.
    pub support_marginals: Vec<f64>,
    /// Prior mass summed over all supports; 1 up to rounding.
    pub prior_mass: f64,
    /// Log marginal likelihood `ln p(y)`.
    pub log_evidence: f64,
}

/// `ln P(s)` under the support prior.
fn ln_support_prior(support: &[bool], prior: &SupportPrior) -> f64 {
    let ln = |p: f64| p.ln();
    match prior {
        SupportPrior::Iid { p0 } => support.iter().map(|&on| if on { ln(*p0) } else { ln(1.0 - p0) }).sum(),
        SupportPrior::Markov(t) => {
            let lambda = t.lambda();
            let mut acc = if support[0] { ln(lambda) } else { ln(1.0 - lambda) };
            for w in support.windows(2) {
                acc += match (w[0], w[1]) {
                    (false, false) => ln(1.0 - t.tau01()),
                    (false, true) => ln(t.tau01()),
                    (true, false) => ln(t.tau10()),
                    (true, true) => ln(1.0 - t.tau10()),
                };
            }
            acc
        }
    }
}

/// Exact posterior of the Bernoulli-Gaussian model `y = Phi w + n` by
/// enumerating every support pattern.
///
/// For support `s` the evidence is `CN(y; 0, I/eta + Phi_s Gamma_s^{-1} Phi_s^H)`
/// and the conditional mean is `Gamma_s^{-1} Phi_s^H K_s^{-1} y`.
pub fn exhaustive_posterior(y: &CVector, phi: &CMatrix, params: &ModelParams) -> Result<ExactPosterior> {
    let (n, m) = phi.shape();
    if m > EXHAUSTIVE_MAX_M {
        return Err(Error::TooLarge { got: m, max: EXHAUSTIVE_MAX_M });
    }
    if y.len() != n || params.gamma.len() != m {
        return Err(Error::Dimension(format!(
            "y has {} entries, Phi is {n}x{m}, {} slab precisions",
            y.len(),
            params.gamma.len()
        )));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    let mut ln_weights = Vec::with_capacity(1 << m);
    let mut means = Vec::with_capacity(1 << m);
    let mut prior_mass = 0.0;
    for code in 0u32..(1u32 << m) {
        let support: Vec<bool> = (0..m).map(|i| code >> i & 1 == 1).collect();
        let ln_prior = ln_support_prior(&support, &params.support);
        prior_mass += ln_prior.exp();

        let mut k = CMatrix::from_diagonal_element(n, n, C64::new(1.0 / params.eta, 0.0));
        for (j, _) in support.iter().enumerate().filter(|(_, &on)| on) {
            let col = phi.column(j);
            k += col * col.adjoint() * C64::new(1.0 / params.gamma[j], 0.0);
        }
        let chol = hermitian_cholesky(k, "support evidence covariance")?;
        let ln_det: f64 = 2.0 * (0..n).map(|i| chol.l_dirty()[(i, i)].re.ln()).sum::<f64>();
        let alpha = chol.solve(y);
        let quad = y.dotc(&alpha).re;
        let ln_evidence = -(n as f64) * PI.ln() - ln_det - quad;
        ln_weights.push(ln_prior + ln_evidence);

        let mean = CVector::from_fn(m, |j, _| {
            if support[j] {
                phi.column(j).dotc(&alpha) / params.gamma[j]
            } else {
                C64::new(0.0, 0.0)
            }
        });
        means.push((support, mean));
    }
    let ln_norm = ln_weights.iter().copied().fold(f64::NEG_INFINITY, log_sum_exp2);
    let mut mean = CVector::zeros(m);
    let mut marginals = vec![0.0; m];
    for (lw, (support, cond)) in ln_weights.iter().zip(&means) {
        let w = (lw - ln_norm).exp();
        mean += cond * C64::new(w, 0.0);
        for (j, &on) in support.iter().enumerate() {
            if on {
                marginals[j] += w;
            }
        }
    }
    Ok(ExactPosterior { mean, support_marginals: marginals, prior_mass, log_evidence: ln_norm })
}

/// A draw from the model itself: clustered support from the Markov chain
/// (conditioned on being non-empty), unit-precision slab, Gaussian sensing matrix with unit-norm columns on
/// average.
#[derive(Debug, Clone)]
pub struct ModelInstance {
    pub y: CVector,
    pub phi: CMatrix,
    pub w: CVector,
    pub support: Vec<bool>,
    pub params: ModelParams,
}

pub fn random_clustered_instance<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    snr_db: f64,
    rng: &mut R,
) -> Result<ModelInstance> {
    if m < 2 || n == 0 {
        return Err(Error::InvalidParameter("need M >= 2 and N >= 1".into()));
    }
    let transition = Transition::with_steady_state(0.3, 0.3)?;
    // Resample until at least one coefficient is active: an empty support has
    // no cluster and makes relative errors meaningless.
    let support = loop {
        let mut support = Vec::with_capacity(m);
        let mut on = rng.random::<f64>() < transition.lambda();
        for _ in 0..m {
            support.push(on);
            let u: f64 = rng.random();
            on = if on { u >= transition.tau10() } else { u < transition.tau01() };
        }
        if support.contains(&true) {
            break support;
        }
    };
    let gamma = 1.0;
    let w = CVector::from_fn(m, |j, _| if support[j] { complex_normal(rng, 1.0 / gamma) } else { C64::new(0.0, 0.0) });
    let phi = CMatrix::from_fn(n, m, |_, _| complex_normal(rng, 1.0 / n as f64));
    let clean = &phi * &w;
    // Noise scaled to the expected signal power per measurement.
    let signal_power = transition.lambda() * m as f64 / gamma / n as f64;
    let eta = 10f64.powf(snr_db / 10.0) / signal_power;
    let y = CVector::from_fn(n, |i, _| clean[i] + complex_normal(rng, 1.0 / eta));
    let params = ModelParams {
        support: SupportPrior::Markov(transition),
        gamma: vec![gamma; m],
        eta,
        grid: crate::signal::AngularGrid::initial(m)?,
    };
    Ok(ModelInstance { y, phi, w, support, params })
}
