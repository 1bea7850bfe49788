//! Spike-and-slab site refinement: cavity, tilted moments, site division
//! and damping.

use std::ops::{Add, Mul};

use crate::linalg::{ln_cn_zero, log_sum_exp2, sigmoid, C64};

/// Variance a site is reset to when division yields a negative variance.
pub const SITE_RESET_VARIANCE: f64 = 1e2;

/// Smallest site variance kept; tighter sites are pinned here.
pub const SITE_MIN_VARIANCE: f64 = 1e-14;

/// Gaussian×Bernoulli site parameters, one entry per coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteFactors {
    pub mu2: Vec<C64>,
    pub sigma2: Vec<f64>,
    pub p2: Vec<f64>,
}

impl SiteFactors {
    /// `mu2 = 0`, `sigma2 = 100`, `p2 = 0`.
    pub fn initial(m: usize) -> Self {
        Self {
            mu2: vec![C64::new(0.0, 0.0); m],
            sigma2: vec![SITE_RESET_VARIANCE; m],
            p2: vec![0.0; m],
        }
    }

    pub fn len(&self) -> usize {
        self.p2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p2.is_empty()
    }

    pub fn entry(&self, m: usize) -> SiteEntry {
        SiteEntry { mu2: self.mu2[m], sigma2: self.sigma2[m], p2: self.p2[m] }
    }

    pub fn set(&mut self, m: usize, e: SiteEntry) {
        self.mu2[m] = e.mu2;
        self.sigma2[m] = e.sigma2;
        self.p2[m] = e.p2;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteEntry {
    pub mu2: C64,
    pub sigma2: f64,
    pub p2: f64,
}

/// Marginal of one coefficient with its own site divided out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cavity {
    pub sigma: f64,
    pub mu: C64,
    /// Support logit.
    pub p: f64,
}

/// Divides site `site` out of the marginal `CN(mu_m, sigma_mm) Bern(sigmoid(p_m))`.
///
/// Returns `None` when the cavity variance is not positive; the caller keeps
/// the previous site for this iteration.
pub fn cavity_q2(sigma_mm: f64, mu_m: C64, p_m: f64, site: &SiteEntry) -> Option<Cavity> {
    if !(sigma_mm > 0.0) {
        return None;
    }
    let precision = 1.0 / sigma_mm - 1.0 / site.sigma2;
    if !(precision > 0.0 && precision.is_finite()) {
        return None;
    }
    let sigma = 1.0 / precision;
    let mu = (mu_m / sigma_mm - site.mu2 / site.sigma2) * sigma;
    Some(Cavity { sigma, mu, p: p_m - site.p2 })
}

/// Moments of the tilted distribution `p(w|z) Q_cav(w, z) / C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridMoments {
    /// Logit of `E[z]`.
    pub p_new: f64,
    pub mu_new: C64,
    pub var_new: f64,
    /// Log normalizer `ln C`.
    pub ln_cm: f64,
    /// `ln CN(0; mu_cav, sigma_cav + 1/gamma) - ln CN(0; mu_cav, sigma_cav)`,
    /// the logit evidence the spike-and-slab factor contributes.
    pub slab_log_ratio: f64,
}

#[inline]
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Closed-form tilted moments for the spike-and-slab factor with slab
/// precision `gamma`.
///
/// Derivatives of `ln C` follow the Wirtinger convention with `mu` and
/// `conj(mu)` treated as independent.
pub fn hybrid_moments(cav: &Cavity, gamma: f64) -> HybridMoments {
    let slab_var = cav.sigma + 1.0 / gamma;
    let ln_slab = ln_cn_zero(cav.mu, slab_var);
    let ln_spike = ln_cn_zero(cav.mu, cav.sigma);
    let slab_log_ratio = ln_slab - ln_spike;
    let p_new = cav.p + slab_log_ratio;
    let on = sigmoid(p_new);
    let off = sigmoid(-p_new);

    // Spike-and-slab mixture of two Gaussian products: the slab component has
    // mean mu / (1 + gamma sigma) and variance sigma / (1 + gamma sigma); the
    // spike sits at zero. Equivalent to differentiating ln C, without the
    // cancellation that form suffers when the spike dominates.
    let shrink = 1.0 / (1.0 + gamma * cav.sigma);
    let slab_mean = cav.mu * shrink;
    let slab_post_var = cav.sigma * shrink;
    let mu_new = slab_mean * on;
    let var_new = on * slab_post_var + on * off * slab_mean.norm_sqr();

    let ln_cm = log_sum_exp2(log_sigmoid(cav.p) + ln_slab, log_sigmoid(-cav.p) + ln_spike);
    HybridMoments { p_new, mu_new, var_new: var_new.max(0.0), ln_cm, slab_log_ratio }
}

/// Site obtained by dividing the projected marginal by the cavity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteUpdate {
    pub site: SiteEntry,
    /// The division gave a negative (or infinite) variance and the site
    /// variance was reset to [`SITE_RESET_VARIANCE`].
    pub reset: bool,
}

pub fn update_q2_site(hyb: &HybridMoments, cav: &Cavity) -> SiteUpdate {
    let p2 = hyb.slab_log_ratio;
    if !(hyb.var_new > SITE_MIN_VARIANCE * cav.sigma) {
        // The tilted marginal collapsed onto the spike.
        return SiteUpdate {
            site: SiteEntry { mu2: C64::new(0.0, 0.0), sigma2: SITE_MIN_VARIANCE, p2 },
            reset: false,
        };
    }
    let precision = 1.0 / hyb.var_new - 1.0 / cav.sigma;
    if precision > 0.0 {
        let sigma2 = (1.0 / precision).max(SITE_MIN_VARIANCE);
        let mu2 = (hyb.mu_new / hyb.var_new - cav.mu / cav.sigma) * sigma2;
        return SiteUpdate { site: SiteEntry { mu2, sigma2, p2 }, reset: false };
    }
    // Reset the variance and pick the mean so that site×cavity still
    // reproduces the tilted mean.
    let sigma2 = SITE_RESET_VARIANCE;
    let mu2 = (hyb.mu_new * (1.0 / cav.sigma + 1.0 / sigma2) - cav.mu / cav.sigma) * sigma2;
    SiteUpdate { site: SiteEntry { mu2, sigma2, p2 }, reset: true }
}

/// `beta * new + (1 - beta) * old`.
#[inline]
pub fn damp<T>(new: T, old: T, beta: f64) -> T
where
    T: Mul<f64, Output = T> + Add<Output = T>,
{
    new * beta + old * (1.0 - beta)
}

/// Annealed damping: `beta` starts at 0.5 and is multiplied by `kappa`
/// after every EP iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingSchedule {
    pub beta: f64,
    pub kappa: f64,
}

impl Default for DampingSchedule {
    fn default() -> Self {
        Self { beta: 0.5, kappa: 0.945 }
    }
}

impl DampingSchedule {
    pub fn advance(&mut self) {
        self.beta *= self.kappa;
    }

    pub fn beta_after(&self, iterations: usize) -> f64 {
        self.beta * self.kappa.powi(iterations as i32)
    }
}
