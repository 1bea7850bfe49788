use crate::ep::markov::MarkovMessages;
use crate::ep::site::SiteFactors;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_cholesky, matmul, matmul_by_adj, CMatrix, CVector, C64};

/// Gaussian×Bernoulli approximation `CN(w; mu, Sigma) prod_m Bern(z_m; sigmoid(p_m))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalPosterior {
    pub mu: CVector,
    pub sigma: CMatrix,
    /// Support logits.
    pub p: Vec<f64>,
}

impl GlobalPosterior {
    pub fn sigma_diag(&self) -> Vec<f64> {
        (0..self.sigma.nrows()).map(|i| self.sigma[(i, i)].re).collect()
    }

    pub fn support_probabilities(&self) -> Vec<f64> {
        self.p.iter().map(|&p| crate::linalg::sigmoid(p)).collect()
    }
}

/// `p_m = p2_m + pF_m + pR_m`, without the reverse term for the last coefficient.
pub fn support_logits(sites: &SiteFactors, msgs: &MarkovMessages) -> Vec<f64> {
    (0..sites.len())
        .map(|m| sites.p2[m] + msgs.forward[m] + msgs.reverse_at(m))
        .collect()
}

/// Combines the exact likelihood term with the site approximations.
///
/// Uses the N×N form `Sigma = S2 - S2 Phi^H (I/eta + Phi S2 Phi^H)^{-1} Phi S2`
/// with `S2 = diag(sigma2)`, and `mu = Sigma (eta Phi^H y + S2^{-1} mu2)`.
pub fn recompute_global(
    y: &CVector,
    phi: &CMatrix,
    eta: f64,
    sites: &SiteFactors,
    msgs: &MarkovMessages,
) -> Result<GlobalPosterior> {
    let (n, m) = phi.shape();
    if y.len() != n || sites.len() != m || msgs.len() != m {
        return Err(Error::Dimension(format!(
            "y has {} entries, Phi is {n}x{m}, {} sites, {} messages",
            y.len(),
            sites.len(),
            msgs.len()
        )));
    }
    if let Some(bad) = sites.sigma2.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "site variance {} at index {bad} is not positive",
            sites.sigma2[bad]
        )));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise precision {eta} is not positive")));
    }

    let scale: Vec<f64> = sites.sigma2.iter().map(|s| s.sqrt()).collect();
    // C = Phi S2^{1/2}
    let mut c = phi.clone();
    for (j, mut col) in c.column_iter_mut().enumerate() {
        col *= C64::new(scale[j], 0.0);
    }
    let l = measurement_factor(&c, eta)?;
    // W = L^{-1} C, so Phi^H K^{-1} Phi scaled = W^H W.
    let mut w = c;
    if !l.solve_lower_triangular_mut(&mut w) {
        return Err(Error::IllConditioned("zero pivot in Cholesky factor".into()));
    }
    let gram = matmul(&w.adjoint(), &w);
    let mut sigma = CMatrix::zeros(m, m);
    for j in 0..m {
        for i in 0..m {
            let delta = if i == j { 1.0 } else { 0.0 };
            sigma[(i, j)] = (C64::new(delta, 0.0) - gram[(i, j)]) * (scale[i] * scale[j]);
        }
    }
    crate::linalg::hermitize(&mut sigma);
    for i in 0..m {
        if sigma[(i, i)].re < 0.0 {
            sigma[(i, i)].re = 0.0;
        }
    }

    // v = eta Phi^H y + S2^{-1} mu2, mu = S2^{1/2} (I - W^H W) S2^{1/2} v
    let phi_h_y = phi.adjoint() * y;
    let sv = CVector::from_fn(m, |i, _| {
        (phi_h_y[i] * eta + sites.mu2[i] / sites.sigma2[i]) * scale[i]
    });
    let wsv = &w * &sv;
    let correction = w.adjoint() * wsv;
    let mu = CVector::from_fn(m, |i, _| (sv[i] - correction[i]) * scale[i]);

    Ok(GlobalPosterior { mu, sigma, p: support_logits(sites, msgs) })
}

/// Lower factor `L` with `L L^H = I/eta + C C^H`.
///
/// Forming `C C^H` loses definiteness once `eta` is large and `C` has low
/// numerical rank; in that case the factor comes from the QR decomposition
/// of the stacked `[C^H; I/sqrt(eta)]`, which never forms the product.
fn measurement_factor(c: &CMatrix, eta: f64) -> Result<CMatrix> {
    let n = c.nrows();
    let mut k = matmul_by_adj(c, c);
    for i in 0..n {
        k[(i, i)] += C64::new(1.0 / eta, 0.0);
    }
    match hermitian_cholesky(k, "measurement covariance I/eta + Phi Sigma2 Phi^H") {
        Ok(chol) => Ok(chol.unpack()),
        Err(_) => square_root_factor(c, eta),
    }
}

fn square_root_factor(c: &CMatrix, eta: f64) -> Result<CMatrix> {
    let (n, m) = c.shape();
    let mut stacked = CMatrix::zeros(m + n, n);
    stacked.rows_mut(0, m).copy_from(&c.adjoint());
    let noise = C64::new(eta.sqrt().recip(), 0.0);
    for i in 0..n {
        stacked[(m + i, i)] = noise;
    }
    let mut r = stacked.qr().r();
    for i in 0..n {
        let d = r[(i, i)];
        let mag = d.norm();
        if !(mag > 0.0 && mag.is_finite()) {
            return Err(Error::IllConditioned(format!(
                "measurement covariance ({n}x{n}) is singular even in square-root form"
            )));
        }
        // Rotate row i so the diagonal is real and positive.
        let phase = d.conj() / mag;
        for j in i..n {
            r[(i, j)] *= phase;
        }
    }
    Ok(r.adjoint())
}
