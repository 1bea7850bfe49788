use emep_core::em::{refine_grid, update_gamma, update_tau};
use emep_core::ep::{hybrid_moments, pair_projection, recompute_global, Cavity, MarkovMessages, SiteFactors};
use emep_core::linalg::{logit, sigmoid};
use emep_core::oracle::{enumerate_bivariate, quad_hybrid_moments, QuadratureSpec, TiltedMoments};
use emep_core::signal::complex_normal;
use emep_core::{AngularGrid, CMatrix, CVector, Transition, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::FRAC_PI_2;

fn random_problem(seed: u64, m: usize, n: usize) -> (CMatrix, CVector, SiteFactors) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = CMatrix::from_fn(n, m, |_, _| complex_normal(&mut rng, 1.0 / n as f64));
    let y = CVector::from_fn(n, |_, _| complex_normal(&mut rng, 1.0));
    let mut sites = SiteFactors::initial(m);
    for j in 0..m {
        sites.sigma2[j] = 10f64.powf(rand::Rng::random_range(&mut rng, -2.0..2.0));
        sites.mu2[j] = complex_normal(&mut rng, 1.0);
    }
    (phi, y, sites)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_covariance_is_hermitian_with_positive_diagonal(
        seed in any::<u64>(), m in 2usize..30, n in 1usize..20, log_eta in -1.0f64..3.0,
    ) {
        let (phi, y, sites) = random_problem(seed, m, n);
        let post = recompute_global(&y, &phi, 10f64.powf(log_eta), &sites, &MarkovMessages::initial(m, 0.3)).unwrap();
        let asym = (&post.sigma - post.sigma.adjoint()).norm() / post.sigma.norm();
        prop_assert!(asym < 1e-12, "asymmetry {asym}");
        for (j, v) in post.sigma_diag().iter().enumerate() {
            prop_assert!(*v > 0.0 && *v <= sites.sigma2[j] * (1.0 + 1e-10));
        }
    }

    #[test]
    fn low_rank_matches_direct_inverse(seed in any::<u64>(), m in 2usize..25, n in 1usize..25) {
        let (phi, y, sites) = random_problem(seed, m, n);
        let eta = 5.0;
        let post = recompute_global(&y, &phi, eta, &sites, &MarkovMessages::initial(m, 0.3)).unwrap();
        let mut prec = phi.adjoint() * &phi * C64::new(eta, 0.0);
        for j in 0..m {
            prec[(j, j)] += C64::new(1.0 / sites.sigma2[j], 0.0);
        }
        let direct = prec.try_inverse().unwrap();
        prop_assert!((&post.sigma - &direct).norm() / direct.norm() < 1e-8);
    }

    #[test]
    fn logit_sigmoid_roundtrip(x in -25.0f64..25.0) {
        let back = logit(sigmoid(x));
        prop_assert!((back - x).abs() < 1e-6 * (1.0 + x.abs()), "{x} -> {back}");
    }

    #[test]
    fn support_logits_add_site_and_messages(
        p2 in prop::collection::vec(-8.0f64..8.0, 3..12), lambda in 0.05f64..0.95,
    ) {
        let m = p2.len();
        let mut sites = SiteFactors::initial(m);
        sites.p2.clone_from(&p2);
        let msgs = MarkovMessages::initial(m, lambda);
        let logits = emep_core::ep::support_logits(&sites, &msgs);
        prop_assert!((logits[0] - (p2[0] + logit(lambda))).abs() < 1e-12);
        for j in 1..m {
            prop_assert!((logits[j] - p2[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn tilted_moments_match_quadrature(
        log_sigma in -2.0f64..1.0, re in -3.0f64..3.0, im in -3.0f64..3.0,
        p in -5.0f64..5.0, log_gamma in -1.0f64..2.0,
    ) {
        let sigma = 10f64.powf(log_sigma);
        let cav = Cavity { sigma, mu: C64::new(re, im) * sigma.sqrt(), p };
        let gamma = 10f64.powf(log_gamma);
        let closed = TiltedMoments::from_hybrid(&hybrid_moments(&cav, gamma));
        let quad = quad_hybrid_moments(&cav, gamma, &QuadratureSpec::default()).unwrap();
        prop_assert!(closed.max_abs_diff(&quad) < 1e-6);
    }

    #[test]
    fn pair_projection_matches_enumeration(
        t01 in 0.001f64..0.999, t10 in 0.001f64..0.999, a in -15.0f64..15.0, b in -15.0f64..15.0,
    ) {
        let tr = Transition::new(t01, t10).unwrap();
        let closed = pair_projection(a, b, &tr);
        let lit = enumerate_bivariate(a, b, &tr);
        let t = closed.table;
        let sum = t.phi00 + t.phi01 + t.phi10 + t.phi11;
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!((t.phi11 - lit.table[1][1]).abs() < 1e-12);
        prop_assert!((t.mean_prev() - lit.mean_prev).abs() < 1e-12);
        prop_assert!((t.mean_next() - lit.mean_next).abs() < 1e-12);
    }

    #[test]
    fn tau_update_stays_in_open_unit_interval(p in prop::collection::vec(-40.0f64..40.0, 2..40)) {
        let tr = update_tau(&p).unwrap();
        for v in [tr.tau01(), tr.tau10()] {
            prop_assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn gamma_update_is_positive(mu in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..20)) {
        let mu = CVector::from_iterator(mu.len(), mu.iter().map(|&(r, i)| C64::new(r, i)));
        let diag = vec![0.0; mu.len()];
        for g in update_gamma(&mu, &diag) {
            prop_assert!(g > 0.0 && g.is_finite());
        }
    }

    #[test]
    fn refined_grid_stays_ordered_and_in_range(
        m in 1usize..60, grad in prop::collection::vec(-1.0f64..1.0, 60), steps in 1usize..300,
    ) {
        let mut grid = AngularGrid::initial(m).unwrap();
        for _ in 0..steps {
            grid = refine_grid(&grid, &grad[..m]).unwrap();
        }
        let a = grid.angles();
        prop_assert!(a.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(a.iter().all(|t| (-FRAC_PI_2..=FRAC_PI_2).contains(t)));
    }
}

#[test]
fn tau_update_on_hard_labels_counts_transitions() {
    let s = |on: bool| if on { 40.0 } else { -40.0 };
    // 0 0 1 1 1 0 0 0 1 1: from off 2 of 5 switch on, from on 1 of 4 switch off
    let labels = [false, false, true, true, true, false, false, false, true, true];
    let p: Vec<f64> = labels.iter().map(|&z| s(z)).collect();
    let tr = update_tau(&p).unwrap();
    assert!((tr.tau01() - 2.0 / 5.0).abs() < 1e-9);
    assert!((tr.tau10() - 1.0 / 4.0).abs() < 1e-9);
}
