//! Quick agreement checks between the closed-form updates and the brute-force
//! oracles, for `emep selftest`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::em::{grid_gradient, grid_objective};
use crate::ep::{hybrid_moments, pair_projection, recompute_global, run_ep, Cavity, EpConfig, MarkovMessages, SiteFactors};
use crate::linalg::{CMatrix, CVector, C64};
use crate::model::Transition;
use crate::oracle::{
    enumerate_bivariate, exhaustive_posterior, quad_hybrid_moments, random_clustered_instance, QuadratureSpec,
    TiltedMoments,
};
use crate::signal::{complex_normal, AngularGrid, ArrayGeometry};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    /// Worst (or median, where stated) error observed.
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "ok  " } else { "FAIL" };
        write!(f, "{tag} {:<28} {:.3e} (< {:.0e})", self.name, self.value, self.threshold)
    }
}

fn check(name: &'static str, value: f64, threshold: f64) -> Check {
    Check { name, value, threshold, passed: value < threshold }
}

/// Cavity with variance log-uniform in `[1e-2, 10]`, mean of comparable
/// scale and logit in `[-5, 5]`, plus a slab precision in `[0.1, 100]`.
pub fn random_cavity<R: Rng + ?Sized>(rng: &mut R) -> (Cavity, f64) {
    let sigma = 10f64.powf(rng.random_range(-2.0..1.0));
    let scale = sigma.sqrt() * rng.random_range(0.0..3.0);
    let mu = complex_normal(rng, 1.0) * scale;
    let p = rng.random_range(-5.0..5.0);
    let gamma = 10f64.powf(rng.random_range(-1.0..2.0));
    (Cavity { sigma, mu, p }, gamma)
}

/// Worst three-moment discrepancy over `cases` random cavities.
pub fn moment_agreement(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = QuadratureSpec::default();
    (0..cases)
        .map(|_| {
            let (cav, gamma) = random_cavity(&mut rng);
            let closed = TiltedMoments::from_hybrid(&hybrid_moments(&cav, gamma));
            let quad = quad_hybrid_moments(&cav, gamma, &spec).expect("valid quadrature spec");
            closed.max_abs_diff(&quad)
        })
        .fold(0.0, f64::max)
}

/// Worst table/marginal discrepancy between the closed-form pair projection
/// and literal enumeration.
pub fn pair_agreement(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let tr = Transition::new(rng.random_range(0.001..0.999), rng.random_range(0.001..0.999)).expect("finite");
        let (a, b) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let closed = pair_projection(a, b, &tr);
        let lit = enumerate_bivariate(a, b, &tr);
        let t = closed.table;
        for (x, y) in [
            (t.phi00, lit.table[0][0]),
            (t.phi01, lit.table[0][1]),
            (t.phi10, lit.table[1][0]),
            (t.phi11, lit.table[1][1]),
            (t.mean_prev(), lit.mean_prev),
            (t.mean_next(), lit.mean_next),
        ] {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

/// Worst relative Frobenius error of the low-rank covariance (and mean)
/// against `(eta Phi^H Phi + S2^{-1})^{-1}` by direct inversion.
pub fn woodbury_agreement(cases: usize, m: usize, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let phi = CMatrix::from_fn(n, m, |_, _| complex_normal(&mut rng, 1.0 / n as f64));
        let y = CVector::from_fn(n, |_, _| complex_normal(&mut rng, 1.0));
        let eta = 10f64.powf(rng.random_range(-1.0..2.0));
        let mut sites = SiteFactors::initial(m);
        for j in 0..m {
            sites.sigma2[j] = 10f64.powf(rng.random_range(-1.0..1.0));
            sites.mu2[j] = complex_normal(&mut rng, 1.0);
        }
        let post = recompute_global(&y, &phi, eta, &sites, &MarkovMessages::initial(m, 0.3)).expect("well posed");

        let mut precision = phi.adjoint() * &phi * C64::new(eta, 0.0);
        for j in 0..m {
            precision[(j, j)] += C64::new(1.0 / sites.sigma2[j], 0.0);
        }
        let direct = precision.try_inverse().expect("positive definite");
        let rhs = phi.adjoint() * &y * C64::new(eta, 0.0)
            + CVector::from_fn(m, |j, _| sites.mu2[j] / sites.sigma2[j]);
        let mu = &direct * rhs;
        worst = worst
            .max((&post.sigma - &direct).norm() / direct.norm())
            .max((&post.mu - &mu).norm() / mu.norm());
    }
    worst
}

/// Worst relative error of the analytic grid gradient against central
/// differences of the grid objective, on random `m`-point problems.
pub fn gradient_agreement(cases: usize, m: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (g, n) = (16, 12);
    let geom = ArrayGeometry::with_default_spacing(g).expect("valid geometry");
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let x = CMatrix::from_fn(n, g, |_, _| complex_normal(&mut rng, 1.0));
        let y = CVector::from_fn(n, |_, _| complex_normal(&mut rng, 4.0));
        let mu = CVector::from_fn(m, |_, _| complex_normal(&mut rng, 1.0));
        let root = CMatrix::from_fn(m, m, |_, _| complex_normal(&mut rng, 0.1));
        let sigma = &root * root.adjoint();
        let base = AngularGrid::initial(m).expect("valid grid");
        // Interior jitter keeps every perturbed grid inside the angle range.
        let theta: Vec<f64> =
            base.angles().iter().map(|t| (t * 0.9) + rng.random_range(-0.01..0.01)).collect();
        let grid = AngularGrid::from_angles(theta.clone()).expect("increasing");
        let analytic = grid_gradient(&y, &x, &grid, &geom, &mu, &sigma);
        let h = 1e-6;
        let numeric: Vec<f64> = (0..m)
            .map(|k| {
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus[k] += h;
                minus[k] -= h;
                let f = |t: Vec<f64>| {
                    grid_objective(&y, &x, &AngularGrid::from_angles(t).expect("increasing"), &geom, &mu, &sigma)
                };
                (f(plus) - f(minus)) / (2.0 * h)
            })
            .collect();
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let norm: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
        worst = worst.max(diff / norm);
    }
    worst
}

/// Per-seed relative error of the EP mean against the exhaustive posterior
/// on random clustered instances drawn from the model.
pub fn ep_vs_exact_errors(seeds: std::ops::Range<u64>, m: usize, n: usize, snr_db: f64) -> Vec<f64> {
    seeds
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let inst = random_clustered_instance(m, n, snr_db, &mut rng).expect("valid sizes");
            let exact = exhaustive_posterior(&inst.y, &inst.phi, &inst.params).expect("small grid");
            let ep = run_ep(&inst.y, &inst.phi, &inst.params, &EpConfig::default(), None).expect("well posed");
            let denom = exact.mean.norm();
            if denom > 0.0 {
                (&ep.posterior.mu - &exact.mean).norm() / denom
            } else {
                ep.posterior.mu.norm()
            }
        })
        .collect()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Reduced-size versions of the oracle agreement checks.
pub fn run_selftest() -> Vec<Check> {
    vec![
        check("tilted moments vs quadrature", moment_agreement(20, 1), 1e-6),
        check("pair projection vs enumeration", pair_agreement(200, 2), 1e-12),
        check("low-rank vs direct covariance", woodbury_agreement(5, 20, 12, 3), 1e-8),
        check("grid gradient vs differences", gradient_agreement(5, 8, 4), 1e-3),
        check("EP vs exact mean (median)", median(&mut ep_vs_exact_errors(0..15, 10, 8, 20.0)), 0.1),
    ]
}
