//! Forward and reverse message updates for the Markov support chain.
//!
//! Each pairwise transition factor is approximated by a product of a reverse
//! message on `z_{m-1}` and a forward message on `z_m`. Refining a pair builds
//! the bivariate tilted table and projects it onto its two marginals.

use crate::linalg::{logit, sigmoid};
use crate::model::Transition;

/// Forward (`len M`) and reverse (`len M - 1`) message logits.
///
/// `forward[0]` carries the prior on the first coefficient, `logit(lambda)`;
/// the last coefficient has no reverse message.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovMessages {
    pub forward: Vec<f64>,
    pub reverse: Vec<f64>,
}

impl MarkovMessages {
    /// All messages zero except `forward[0] = logit(lambda)`.
    pub fn initial(m: usize, lambda: f64) -> Self {
        let mut forward = vec![0.0; m];
        if m > 0 {
            forward[0] = logit(lambda);
        }
        Self { forward, reverse: vec![0.0; m.saturating_sub(1)] }
    }

    /// Independent Bernoulli(p0) prior: every forward message is `logit(p0)`,
    /// reverse messages are neutral.
    pub fn iid(m: usize, p0: f64) -> Self {
        Self { forward: vec![logit(p0); m], reverse: vec![0.0; m.saturating_sub(1)] }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// Reverse logit at `m`, zero for the last coefficient.
    #[inline]
    pub fn reverse_at(&self, m: usize) -> f64 {
        self.reverse.get(m).copied().unwrap_or(0.0)
    }
}

/// Joint pmf of `(z_{m-1}, z_m)`; `phi_ij = P(z_{m-1} = i, z_m = j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivariateBernoulli {
    pub phi00: f64,
    pub phi01: f64,
    pub phi10: f64,
    pub phi11: f64,
}

impl BivariateBernoulli {
    pub fn total(&self) -> f64 {
        self.phi00 + self.phi01 + self.phi10 + self.phi11
    }

    /// `E[z_{m-1}]`.
    pub fn mean_prev(&self) -> f64 {
        self.phi10 + self.phi11
    }

    /// `E[z_m]`.
    pub fn mean_next(&self) -> f64 {
        self.phi01 + self.phi11
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairProjection {
    pub table: BivariateBernoulli,
    /// Normalizer of the tilted pair distribution.
    pub d: f64,
}

/// Tilted pair `q\R(z_{m-1}) p(z_m | z_{m-1}) q\F(z_m)` from the two cavity
/// logits, normalized in closed form.
pub fn pair_projection(prev_cavity: f64, next_cavity: f64, tr: &Transition) -> PairProjection {
    let (t01, t10) = (tr.tau01(), tr.tau10());
    let r1 = sigmoid(prev_cavity);
    let r0 = sigmoid(-prev_cavity);
    let f1 = sigmoid(next_cavity);
    let f0 = sigmoid(-next_cavity);
    let u00 = r0 * f0 * (1.0 - t01);
    let u01 = r0 * f1 * t01;
    let u10 = r1 * f0 * t10;
    let u11 = r1 * f1 * (1.0 - t10);
    let d = u00 + u10 + u01 + u11;
    PairProjection {
        table: BivariateBernoulli { phi00: u00 / d, phi01: u01 / d, phi10: u10 / d, phi11: u11 / d },
        d,
    }
}

/// Forward message into `z_m` from the cavity of `z_{m-1}`.
#[inline]
pub fn forward_message(prev_cavity: f64, tr: &Transition) -> f64 {
    logit(sigmoid(prev_cavity) * (1.0 - tr.tau10()) + sigmoid(-prev_cavity) * tr.tau01())
}

/// Reverse message into `z_m` from the cavity of `z_{m+1}`.
#[inline]
pub fn reverse_message(next_cavity: f64, tr: &Transition) -> f64 {
    let f1 = sigmoid(next_cavity);
    let f0 = sigmoid(-next_cavity);
    let on = f1 * (1.0 - tr.tau10()) + f0 * tr.tau10();
    let off = f1 * tr.tau01() + f0 * (1.0 - tr.tau01());
    logit(on / (on + off))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassOutput {
    pub messages: MarkovMessages,
    /// Support logits refreshed from the pair projections.
    pub p: Vec<f64>,
}

/// One forward sweep followed by one reverse sweep.
///
/// `forward[0]` is reset to `logit(lambda)` of `tr`. Each pair projection
/// refreshes the support logits of both coefficients it touches, so after the
/// reverse sweep `p` holds the chain marginals given the site logits `p2`.
pub fn forward_reverse_pass(p2: &[f64], msgs: &MarkovMessages, tr: &Transition) -> PassOutput {
    let m_len = p2.len();
    assert_eq!(msgs.len(), m_len, "message and site lengths differ");
    let mut out = msgs.clone();
    if m_len == 0 {
        return PassOutput { messages: out, p: Vec::new() };
    }
    out.forward[0] = logit(tr.lambda());
    let mut p: Vec<f64> = (0..m_len).map(|m| p2[m] + out.forward[m] + out.reverse_at(m)).collect();

    for m in 1..m_len {
        let prev_cav = p2[m - 1] + out.forward[m - 1];
        let next_cav = p2[m] + out.reverse_at(m);
        let proj = pair_projection(prev_cav, next_cav, tr);
        p[m - 1] = logit(proj.table.mean_prev());
        p[m] = logit(proj.table.mean_next());
        out.forward[m] = forward_message(prev_cav, tr);
    }

    for m in (0..m_len.saturating_sub(1)).rev() {
        let prev_cav = p2[m] + out.forward[m];
        let next_cav = p2[m + 1] + out.reverse_at(m + 1);
        let proj = pair_projection(prev_cav, next_cav, tr);
        p[m] = logit(proj.table.mean_prev());
        p[m + 1] = logit(proj.table.mean_next());
        out.reverse[m] = reverse_message(next_cav, tr);
    }

    PassOutput { messages: out, p }
}
