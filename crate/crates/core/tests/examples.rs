//! Worked examples through the public API.

use emep_core::em::{initial_params, update_eta, update_gamma, update_tau};
use emep_core::ep::{
    cavity_q2, damp, forward_reverse_pass, hybrid_moments, update_q2_site, Cavity, DampingSchedule, MarkovMessages,
    SiteEntry,
};
use emep_core::linalg::sigmoid;
use emep_core::signal::{
    build_dictionary, generate_pilots, measure, nmse_db, steering_derivative, steering_vector, synthesize_channel,
    GroundTruthChannel,
};
use emep_core::{run_em_ep, run_em_ep_b, AngularGrid, ArrayGeometry, CMatrix, CVector, EmConfig, SupportPrior, Transition, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[test]
fn steering_at_broadside_and_endfire() {
    let a = steering_vector(0.0, &ArrayGeometry::new(4, 0.5).unwrap());
    assert!(a.iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-15));
    let b = steering_vector(std::f64::consts::FRAC_PI_2, &ArrayGeometry::new(2, 0.5).unwrap());
    assert!((b[1] - c(-1.0, 0.0)).norm() < 1e-12);
}

#[test]
fn steering_derivative_matches_differences() {
    let geom = ArrayGeometry::new(8, 0.5425).unwrap();
    let h = 1e-6;
    let fd = (steering_vector(0.3 + h, &geom) - steering_vector(0.3 - h, &geom)) / c(2.0 * h, 0.0);
    let d = steering_derivative(0.3, &geom);
    assert!((&d - &fd).norm() / d.norm() < 1e-6);
    let d0 = steering_derivative(0.0, &ArrayGeometry::new(2, 0.5).unwrap());
    assert!((d0[1] - c(0.0, -std::f64::consts::PI)).norm() < 1e-12);
}

#[test]
fn square_initial_dictionary_is_scaled_unitary() {
    let g = 16;
    let a = build_dictionary(&AngularGrid::initial(g).unwrap(), &ArrayGeometry::new(g, 0.5).unwrap());
    let gram = a.adjoint() * &a;
    let eye = CMatrix::identity(g, g) * c(g as f64, 0.0);
    assert!((gram - eye).norm() < 1e-10 * g as f64);
}

#[test]
fn channel_synthesis_is_deterministic_and_unit_gain_path_is_a_steering_vector() {
    let geom = ArrayGeometry::with_default_spacing(32).unwrap();
    let draw = |s| synthesize_channel(3, 10, 10f64.to_radians(), &geom, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
    assert_eq!(draw(4).h, draw(4).h);
    let one = GroundTruthChannel::from_paths(vec![0.2], vec![vec![0.2]], vec![vec![c(1.0, 0.0)]], &geom).unwrap();
    assert!((&one.h - steering_vector(0.2, &geom)).norm() < 1e-12);
}

#[test]
fn pilots_have_unit_average_power_and_noiseless_measurement_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pilots = generate_pilots(12, 20, &mut rng).unwrap();
    let tr: f64 = pilots.x.iter().map(|v| v.norm_sqr()).sum();
    assert!((tr - 240.0).abs() < 1e-9);
    let h = CVector::from_fn(20, |i, _| c(i as f64, 1.0));
    let meas = measure(&pilots, &h, f64::INFINITY, &mut rng).unwrap();
    assert!((&meas.y - &pilots.x * &h).norm() < 1e-9);
    assert!((measure(&pilots, &h, 10.0, &mut rng).unwrap().true_eta - 10.0).abs() < 1e-12);
}

#[test]
fn nmse_of_scaled_and_zero_estimates() {
    let h = CVector::from_fn(6, |i, _| c(1.0, i as f64));
    assert!((nmse_db(&(&h * c(1.1, 0.0)), &h).unwrap() + 20.0).abs() < 1e-9);
    assert!(nmse_db(&CVector::zeros(6), &h).unwrap().abs() < 1e-12);
    assert_eq!(nmse_db(&h, &h).unwrap(), -300.0);
}

#[test]
fn cavity_of_a_unit_site() {
    let site = SiteEntry { mu2: c(0.0, 0.0), sigma2: 1.0, p2: 0.5 };
    let cav = cavity_q2(0.5, c(1.0, 0.0), 2.0, &site).unwrap();
    assert!((cav.sigma - 1.0).abs() < 1e-12);
    assert!((cav.mu - c(2.0, 0.0)).norm() < 1e-12);
    assert!((cav.p - 1.5).abs() < 1e-12);
}

#[test]
fn symmetric_cavity_gives_one_third_activity() {
    let hyb = hybrid_moments(&Cavity { sigma: 1.0, mu: c(0.0, 0.0), p: 0.0 }, 1.0);
    assert!((sigmoid(hyb.p_new) - 1.0 / 3.0).abs() < 1e-12);
    assert!(hyb.mu_new.norm() < 1e-15);
}

#[test]
fn site_times_cavity_reproduces_tilted_moments() {
    let cav = Cavity { sigma: 0.8, mu: c(1.2, -0.4), p: 0.7 };
    let hyb = hybrid_moments(&cav, 2.0);
    let up = update_q2_site(&hyb, &cav);
    assert!(!up.reset);
    let prec = 1.0 / cav.sigma + 1.0 / up.site.sigma2;
    let mean = (cav.mu / cav.sigma + up.site.mu2 / up.site.sigma2) / prec;
    assert!((1.0 / prec - hyb.var_new).abs() < 1e-10);
    assert!((mean - hyb.mu_new).norm() < 1e-10);
}

#[test]
fn uniform_chain_passes_leave_messages_neutral() {
    let tr = Transition::new(0.5, 0.5).unwrap();
    let out = forward_reverse_pass(&[0.0; 6], &MarkovMessages::initial(6, 0.5), &tr);
    assert!(out.messages.forward.iter().chain(&out.messages.reverse).all(|v| v.abs() < 1e-12));
    assert!(out.p.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn damping_and_schedule() {
    assert_eq!(damp(4.0, 0.0, 0.5), 2.0);
    assert_eq!(damp(4.0, 1.0, 1.0), 4.0);
    let s = DampingSchedule::default();
    assert!((s.beta_after(10) - 0.5 * 0.945f64.powi(10)).abs() < 1e-15);
}

#[test]
fn parameter_updates_on_hand_cases() {
    let tr = update_tau(&[0.0; 8]).unwrap();
    assert!((tr.tau01() - 0.5).abs() < 1e-12 && (tr.tau10() - 0.5).abs() < 1e-12);

    let g = update_gamma(&CVector::from_vec(vec![c(0.0, 0.0), c(0.5f64.sqrt(), 0.0), c(0.0, 0.0)]), &[1.0, 0.5, 0.0]);
    assert!((g[0] - 1.0).abs() < 1e-12 && (g[1] - 1.0).abs() < 1e-12);
    assert_eq!(g[2], 1e12);

    let phi = CMatrix::identity(4, 2);
    let y = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0), c(1.0, 0.0), c(0.0, -1.0)]);
    let eta = update_eta(&y, &phi, &CVector::from_vec(vec![c(0.0, 0.0), c(0.0, 1.0)]), &CMatrix::zeros(2, 2));
    // residual energy 1 + 0 + 1 + 1 = 3 over N = 4
    assert!((eta - 4.0 / 3.0).abs() < 1e-12);
}

#[test]
fn initial_parameters() {
    let y = CVector::from_element(10, c(1.0, 1.0));
    let cfg = EmConfig::default();
    let xi = initial_params(&y, 5, &cfg).unwrap();
    let expected = 101.0 * 10.0 / 20.0;
    assert!((xi.eta - expected).abs() < 1e-9);
    assert!(xi.gamma.iter().all(|g| (g - expected).abs() < 1e-9));
    let SupportPrior::Markov(tr) = xi.support else { panic!("clustered prior expected") };
    assert!((tr.lambda() - 0.3).abs() < 1e-12);
    assert!((tr.tau10() - 0.1).abs() < 1e-12);
    assert!((tr.tau01() - 3.0 / 70.0).abs() < 1e-12);
}

fn two_cluster_instance(seed: u64) -> (CVector, CMatrix, CVector, ArrayGeometry) {
    let (g, m, n) = (32, 32, 24);
    let geom = ArrayGeometry::with_default_spacing(g).unwrap();
    let grid = AngularGrid::initial(m).unwrap();
    let a = build_dictionary(&grid, &geom);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = CVector::zeros(m);
    for k in [6, 7, 8, 20, 21] {
        w[k] = emep_core::signal::complex_normal(&mut rng, 1.0) + c(1.0, 0.0);
    }
    let h = &a * w;
    let pilots = generate_pilots(n, g, &mut rng).unwrap();
    let y = measure(&pilots, &h, 50.0, &mut rng).unwrap().y;
    (y, pilots.x, h, geom)
}

#[test]
fn clustered_on_grid_channel_is_recovered() {
    let (y, x, h, geom) = two_cluster_instance(11);
    let cfg = EmConfig { grid_refinement: false, ..EmConfig::default() };
    let res = run_em_ep(&y, &x, 32, &cfg, &geom).unwrap();
    assert!(nmse_db(&res.h_hat, &h).unwrap() < -30.0);
    assert_eq!(res.trace.len(), res.em_iterations);
    assert_eq!(res.trace.iter().map(|t| t.ep_iterations).sum::<usize>(), res.ep_iterations_total);
    if res.converged {
        assert!(res.trace.last().unwrap().mu_change < cfg.eps_em);
    }
}

#[test]
fn baseline_learns_an_activity_rate() {
    let (y, x, _, geom) = two_cluster_instance(12);
    let cfg = EmConfig { grid_refinement: false, n_em: 20, ..EmConfig::default() };
    let res = run_em_ep_b(&y, &x, 32, &cfg, &geom).unwrap();
    let SupportPrior::Iid { p0 } = res.xi_final.support else { panic!("iid prior expected") };
    assert!(p0 > 0.0 && p0 < 1.0);
}

#[test]
fn estimator_is_deterministic_without_refinement() {
    let (y, x, _, geom) = two_cluster_instance(13);
    let cfg = EmConfig { grid_refinement: false, n_em: 15, ..EmConfig::default() };
    let a = run_em_ep(&y, &x, 32, &cfg, &geom).unwrap();
    let b = run_em_ep(&y, &x, 32, &cfg, &geom).unwrap();
    assert_eq!(a.h_hat, b.h_hat);
}
