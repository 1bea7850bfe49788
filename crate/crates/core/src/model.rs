//! Hyperparameters shared by the EP inner loop and the EM outer loop.

use crate::error::{Error, Result};
use crate::signal::AngularGrid;

/// Transition probabilities are kept inside `[TAU_MIN, 1 - TAU_MIN]`.
pub const TAU_MIN: f64 = 1e-6;

/// Upper bound on any learned precision.
pub const PRECISION_CAP: f64 = 1e12;

/// First-order Markov chain on the support.
///
/// `tau01 = P(z_m = 1 | z_{m-1} = 0)`, `tau10 = P(z_m = 0 | z_{m-1} = 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    tau01: f64,
    tau10: f64,
}

impl Transition {
    /// Clamps both probabilities into `[TAU_MIN, 1 - TAU_MIN]`.
    pub fn new(tau01: f64, tau10: f64) -> Result<Self> {
        if !(tau01.is_finite() && tau10.is_finite()) {
            return Err(Error::InvalidParameter("transition probabilities must be finite".into()));
        }
        Ok(Self {
            tau01: tau01.clamp(TAU_MIN, 1.0 - TAU_MIN),
            tau10: tau10.clamp(TAU_MIN, 1.0 - TAU_MIN),
        })
    }

    /// Chain whose steady-state activity is `lambda`, with the given
    /// on-to-off probability.
    pub fn with_steady_state(lambda: f64, tau10: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidParameter(format!("lambda must lie in (0, 1), got {lambda}")));
        }
        Self::new(lambda / (1.0 - lambda) * tau10, tau10)
    }

    pub fn tau01(&self) -> f64 {
        self.tau01
    }

    pub fn tau10(&self) -> f64 {
        self.tau10
    }

    /// Steady-state probability of an active coefficient.
    pub fn lambda(&self) -> f64 {
        self.tau01 / (self.tau01 + self.tau10)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportPrior {
    /// Clustered support: Markov chain started in its steady state.
    Markov(Transition),
    /// Independent Bernoulli(p0) support.
    Iid { p0: f64 },
}

/// Model parameters `(support prior, gamma, eta, theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub support: SupportPrior,
    /// Slab precision per grid point.
    pub gamma: Vec<f64>,
    /// Noise precision.
    pub eta: f64,
    pub grid: AngularGrid,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.gamma.len() != self.grid.len() {
            return Err(Error::Dimension(format!(
                "{} slab precisions for a {}-point grid",
                self.gamma.len(),
                self.grid.len()
            )));
        }
        if self.gamma.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidParameter("slab precisions must be positive and finite".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise precision must be positive, got {}", self.eta)));
        }
        if let SupportPrior::Iid { p0 } = self.support {
            if !(p0 > 0.0 && p0 < 1.0) {
                return Err(Error::InvalidParameter(format!("p0 must lie in (0, 1), got {p0}")));
            }
        }
        Ok(())
    }

    /// Flattened parameter vector `(tau01, tau10 | p0, gamma, eta, theta)`,
    /// used for convergence diagnostics.
    pub fn as_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.gamma.len() + self.grid.len() + 3);
        match self.support {
            SupportPrior::Markov(t) => {
                v.push(t.tau01());
                v.push(t.tau10());
            }
            SupportPrior::Iid { p0 } => v.push(p0),
        }
        v.extend_from_slice(&self.gamma);
        v.push(self.eta);
        v.extend_from_slice(self.grid.angles());
        v
    }

    pub fn num_coefficients(&self) -> usize {
        self.grid.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steady_state_inverse() {
        let t = Transition::with_steady_state(0.3, 0.1).unwrap();
        assert!((t.tau01() - 3.0 / 70.0).abs() < 1e-15);
        assert!((t.lambda() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn transitions_are_clamped() {
        let t = Transition::new(0.0, 1.0).unwrap();
        assert_eq!(t.tau01(), TAU_MIN);
        assert_eq!(t.tau10(), 1.0 - TAU_MIN);
    }
}
