//! Expectation propagation for the Bernoulli-Gaussian model with a Markov
//! (or iid) support prior.
//!
//! The posterior over `(w, z)` is approximated by `Q(w) Q(z)`. The Gaussian
//! likelihood term is kept exact; each spike-and-slab factor is replaced by a
//! Gaussian×Bernoulli site and each chain transition by a pair of Bernoulli
//! messages.

pub mod global;
pub mod markov;
pub mod site;

pub use global::{recompute_global, support_logits, GlobalPosterior};
pub use markov::{
    forward_message, forward_reverse_pass, pair_projection, reverse_message, BivariateBernoulli,
    MarkovMessages, PairProjection, PassOutput,
};
pub use site::{
    cavity_q2, damp, hybrid_moments, update_q2_site, Cavity, DampingSchedule, HybridMoments,
    SiteEntry, SiteFactors, SiteUpdate, SITE_RESET_VARIANCE,
};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};
use crate::model::{ModelParams, SupportPrior};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpConfig {
    pub max_iterations: usize,
    /// Relative change of `mu` below which the loop stops.
    pub tolerance: f64,
    pub damping: DampingSchedule,
}

impl Default for EpConfig {
    fn default() -> Self {
        Self { max_iterations: 100, tolerance: 1e-4, damping: DampingSchedule::default() }
    }
}

/// Site and message parameters; everything needed to warm-start a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpState {
    pub sites: SiteFactors,
    pub messages: MarkovMessages,
}

impl EpState {
    pub fn initial(params: &ModelParams) -> Self {
        let m = params.num_coefficients();
        let messages = match params.support {
            SupportPrior::Markov(t) => MarkovMessages::initial(m, t.lambda()),
            SupportPrior::Iid { p0 } => MarkovMessages::iid(m, p0),
        };
        Self { sites: SiteFactors::initial(m), messages }
    }

    /// Re-bind the prior-dependent messages to `params`: the first forward
    /// message for a Markov chain, every message for an iid prior.
    fn attach_prior(&mut self, params: &ModelParams) {
        let m = self.sites.len();
        match params.support {
            SupportPrior::Markov(t) => {
                if m > 0 {
                    self.messages.forward[0] = crate::linalg::logit(t.lambda());
                }
            }
            SupportPrior::Iid { p0 } => self.messages = MarkovMessages::iid(m, p0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpOutput {
    pub posterior: GlobalPosterior,
    pub state: EpState,
    /// Number of global recomputations performed.
    pub iterations: usize,
    pub converged: bool,
    /// Site updates skipped because the cavity variance was not positive.
    pub skipped_sites: usize,
    /// Site updates whose variance was reset after a negative division.
    pub reset_sites: usize,
}

/// Relative change `||new - old|| / ||old||`; zero only if both vanish.
pub fn relative_change(new: &CVector, old: &CVector) -> f64 {
    let denom = old.norm();
    let diff = (new - old).norm();
    if denom > 0.0 {
        diff / denom
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Runs EP to convergence (or `max_iterations`).
///
/// Each iteration recomputes the global approximation, stops if `mu` moved
/// less than the tolerance, and otherwise refines every spike-and-slab site
/// from that snapshot, sweeps the chain messages forward then backward, and
/// damps all new site and message parameters against the previous ones.
pub fn run_ep(
    y: &CVector,
    phi: &CMatrix,
    params: &ModelParams,
    config: &EpConfig,
    warm_start: Option<EpState>,
) -> Result<EpOutput> {
    params.validate()?;
    let m_len = params.num_coefficients();
    if phi.ncols() != m_len {
        return Err(Error::Dimension(format!(
            "Phi has {} columns but the grid has {m_len} points",
            phi.ncols()
        )));
    }
    if config.max_iterations == 0 {
        return Err(Error::InvalidParameter("EP needs at least one iteration".into()));
    }
    let mut state = match warm_start {
        Some(s) if s.sites.len() == m_len => s,
        Some(s) => {
            return Err(Error::Dimension(format!(
                "warm start has {} sites for {m_len} coefficients",
                s.sites.len()
            )))
        }
        None => EpState::initial(params),
    };
    state.attach_prior(params);

    let mut schedule = config.damping;
    let mut previous: Option<CVector> = None;
    let mut skipped = 0;
    let mut resets = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut posterior;

    loop {
        posterior = recompute_global(y, phi, params.eta, &state.sites, &state.messages)?;
        iterations += 1;
        if let Some(prev) = &previous {
            if relative_change(&posterior.mu, prev) < config.tolerance {
                converged = true;
                break;
            }
        }
        if iterations >= config.max_iterations {
            break;
        }

        let mut fresh = state.sites.clone();
        for m in 0..m_len {
            let Some(cav) = cavity_q2(
                posterior.sigma[(m, m)].re,
                posterior.mu[m],
                posterior.p[m],
                &state.sites.entry(m),
            ) else {
                skipped += 1;
                continue;
            };
            let hyb = hybrid_moments(&cav, params.gamma[m]);
            let upd = update_q2_site(&hyb, &cav);
            resets += usize::from(upd.reset);
            fresh.set(m, upd.site);
        }

        let fresh_messages = match params.support {
            SupportPrior::Markov(t) => forward_reverse_pass(&fresh.p2, &state.messages, &t).messages,
            SupportPrior::Iid { .. } => state.messages.clone(),
        };

        let beta = schedule.beta;
        for m in 0..m_len {
            let old = state.sites.entry(m);
            let new = fresh.entry(m);
            state.sites.set(
                m,
                SiteEntry {
                    mu2: damp(new.mu2, old.mu2, beta),
                    sigma2: damp(new.sigma2, old.sigma2, beta),
                    p2: damp(new.p2, old.p2, beta),
                },
            );
        }
        // forward[0] is the fixed prior term and is not damped.
        for m in 1..m_len {
            state.messages.forward[m] =
                damp(fresh_messages.forward[m], state.messages.forward[m], beta);
        }
        for m in 0..m_len.saturating_sub(1) {
            state.messages.reverse[m] =
                damp(fresh_messages.reverse[m], state.messages.reverse[m], beta);
        }
        schedule.advance();
        previous = Some(posterior.mu.clone());
    }

    Ok(EpOutput { posterior, state, iterations, converged, skipped_sites: skipped, reset_sites: resets })
}
