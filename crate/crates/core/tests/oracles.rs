//! Closed forms against independent oracles: value iteration, finite
//! differences, truncated series and Monte Carlo rollouts.

use std::time::Instant;

use erlq::audit;
use erlq::bounds;
use erlq::eval;
use erlq::{solve_are, GaussianPolicy, SystemParams};

#[test]
fn are_reaches_tight_residual_quickly() {
    let p = SystemParams::reference_experiment();
    let t = Instant::now();
    let sol = solve_are(&p, 1e-14, 100_000).unwrap();
    assert!(t.elapsed().as_secs_f64() < 1.0);
    assert!(sol.residual <= 1e-12, "residual {}", sol.residual);
    assert!(eval::grad_k(&p, &sol.k_star, &sol.sigma_star).unwrap().norm() <= 1e-8);
    assert!(eval::grad_sigma(&p, &sol.k_star, &sol.sigma_star).unwrap().norm() <= 1e-8);
}

#[test]
fn optimum_beats_random_policies() {
    let p = SystemParams::reference_experiment();
    let sol = solve_are(&p, 1e-14, 100_000).unwrap();
    for pol in audit::random_policies(&p, 200, 3) {
        assert!(eval::cost_f(&p, &pol.k, &pol.sigma).unwrap() >= sol.f_star);
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let p = SystemParams::reference_experiment();
    let pols = audit::random_policies(&p, 100, 42);
    let t = Instant::now();
    let rows = audit::gradcheck(&p, &pols, 1e-6).unwrap();
    assert!(t.elapsed().as_secs_f64() < 10.0);
    let worst_k = rows.iter().map(|r| r.rel_err_k).fold(0.0, f64::max);
    let worst_s = rows.iter().map(|r| r.rel_err_sigma).fold(0.0, f64::max);
    assert!(worst_k <= 1e-6, "worst K relative error {worst_k}");
    assert!(worst_s <= 1e-6, "worst Sigma relative error {worst_s}");
}

#[test]
fn gradients_match_on_random_systems() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    for i in 0..30 {
        let p = erlq::inequalities::random_system(&mut rng);
        let pols = audit::random_policies(&p, 3, i);
        for r in audit::gradcheck(&p, &pols, 1e-6).unwrap() {
            assert!(r.rel_err_k <= 1e-5 && r.rel_err_sigma <= 1e-5, "{r:?}");
        }
    }
}

#[test]
fn closed_form_moment_matches_truncated_series() {
    let p = SystemParams::reference_experiment();
    for pol in audit::random_policies(&p, 100, 7) {
        let (l, _) = bounds::rollout_length(&p, &pol, 1e-10, false).unwrap();
        let s = eval::s_k_sigma(&p, &pol.k, &pol.sigma).unwrap();
        let s_l = eval::truncated_s(&p, &pol.k, &pol.sigma, l).unwrap();
        assert!((s - s_l).abs() <= 1e-8, "S = {s}, S^(l) = {s_l}");
    }
}

#[test]
fn closed_form_cost_matches_truncated_series() {
    let p = SystemParams::reference_experiment();
    for pol in audit::random_policies(&p, 100, 8) {
        let (_, l) = bounds::rollout_length(&p, &pol, 1e-10, false).unwrap();
        let f = eval::cost_f(&p, &pol.k, &pol.sigma).unwrap();
        let f_l = eval::truncated_cost(&p, &pol.k, &pol.sigma, l).unwrap();
        assert!((f - f_l).abs() <= 1e-8 * (1.0 + f.abs()));
    }
}

#[test]
fn rollouts_agree_with_closed_forms() {
    let p = SystemParams::reference_experiment();
    let t = Instant::now();
    for (i, pol) in audit::random_policies(&p, 10, 21).iter().enumerate() {
        let (ls, lf) = bounds::rollout_length(&p, pol, 1e-4, false).unwrap();
        let l = ls.max(lf);
        let mc = audit::monte_carlo(&p, pol, 100_000, l, erlq::seed::derive(4, i as u64, 0, erlq::seed::Purpose::Report)).unwrap();
        let f = eval::cost_f(&p, &pol.k, &pol.sigma).unwrap();
        let s = eval::s_k_sigma(&p, &pol.k, &pol.sigma).unwrap();
        assert!((mc.f_mean - f).abs() <= 3.0 * mc.f_se + 1e-4, "policy {i}: f {f} vs {mc:?}");
        assert!((mc.s_mean - s).abs() <= 3.0 * mc.s_se + 1e-4, "policy {i}: S {s} vs {mc:?}");
    }
    assert!(t.elapsed().as_secs_f64() < 60.0);
}

#[test]
fn entropy_term_matches_rollouts_without_state_cost() {
    // With x0 = 0 forever the cost is the discounted log-density term alone.
    let mut p = SystemParams::reference_experiment();
    p.init = erlq::InitialStateDist::TwoPoint { c: 1e-150 };
    p.a = 0.0;
    p.b = nalgebra::DVector::zeros(3);
    p.d = nalgebra::DMatrix::zeros(3, 3);
    let pol = GaussianPolicy::isotropic(3, 0.3);
    let mc = audit::monte_carlo(&p, &pol, 50_000, 40, 5).unwrap();
    let psi = eval::psi(&p, &pol.sigma).unwrap() / (1.0 - p.gamma);
    assert!((mc.f_mean - psi).abs() <= 3.0 * mc.f_se + 1e-9, "{} vs {}", mc.f_mean, psi);
}
