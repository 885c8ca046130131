//! Zeroth-order estimators, sample-size rules and the convergence schedule.

use std::time::Instant;

use erlq::audit;
use erlq::bounds::{self, BoundOptions};
use erlq::{solve_are, CoefficientMode, GaussianPolicy, SystemParams};

#[test]
fn centered_estimates_validate_ambient_coefficient() {
    let p = SystemParams::reference_experiment();
    let pol = GaussianPolicy::isotropic(3, 0.5);
    let t = Instant::now();
    let c = audit::coefficient_check(&p, &pol, CoefficientMode::AmbientDim, 1e-3, 200_000, 17).unwrap();
    assert!(c.centered_err_k <= c.tol_k, "{c:?}");
    assert!(c.centered_err_sigma <= c.tol_sigma, "{c:?}");
    assert!((c.sigma_scale - 1.0).abs() < 0.02, "{c:?}");
    // The raw one-point estimate carries the zero-mean f(x) mean(U) term.
    assert!(c.raw_err_k > c.centered_err_k);
    let p_n = audit::coefficient_check(&p, &pol, CoefficientMode::PaperN, 1e-3, 200_000, 17).unwrap();
    // n / (n(n+1)/2) = 2/(n+1) = 1/2 for n = 3.
    assert!((p_n.sigma_scale - 0.5).abs() < 0.02, "{p_n:?}");
    assert!(p_n.centered_err_sigma > 10.0 * p_n.tol_sigma, "{p_n:?}");
    assert!(t.elapsed().as_secs_f64() < 30.0);
}

#[test]
fn bernstein_count_achieves_its_confidence() {
    let (dim, rho, eps, kappa) = (3, 1.0, 0.1, 0.1);
    let n = bounds::bernstein_sample_size(rho * rho, rho, eps, kappa, dim).unwrap();
    let cover = audit::sphere_mean_coverage(dim, rho, n as u64, eps, 200, 5);
    assert!(cover >= 1.0 - kappa, "coverage {cover} at N = {n}");
}

#[test]
fn moment_estimate_coverage() {
    let p = SystemParams::reference_experiment();
    let sol = solve_are(&p, 1e-12, 100_000).unwrap();
    let pol = GaussianPolicy::isotropic(3, 0.5);
    let s = erlq::eval::s_k_sigma(&p, &pol.k, &pol.sigma).unwrap();
    let opts = BoundOptions::default();
    let kappa = 0.1;

    // Bernstein count: coverage at least 1 - kappa.
    let eps = 0.3 * s;
    let plan = bounds::s_estimate_plan(&p, &pol, &sol, eps, kappa, &opts).unwrap();
    let (l_tail, _) = bounds::rollout_length(&p, &pol, eps / 3.0, false).unwrap();
    let l = plan.l.max(l_tail);
    let cover = audit::s_estimate_coverage(&p, &pol, plan.r3, plan.m as usize, l, eps, 100, 1).unwrap();
    assert!(cover >= 1.0 - kappa, "coverage {cover} with M = {}", plan.m);

    // The stated square-root count under-covers at tight tolerances.
    let eps = 0.02 * s;
    let plan = bounds::s_estimate_plan(&p, &pol, &sol, eps, kappa, &opts).unwrap();
    let (l_tail, _) = bounds::rollout_length(&p, &pol, eps / 3.0, false).unwrap();
    let l = plan.l.max(l_tail);
    let cover = audit::s_estimate_coverage(&p, &pol, plan.r3, plan.m_stated as usize, l, eps, 100, 2).unwrap();
    assert!(cover < 1.0 - kappa, "coverage {cover} with M = {}", plan.m_stated);
}

#[test]
fn moment_estimate_stays_above_half_mu() {
    let p = SystemParams::reference_experiment();
    let pol = GaussianPolicy::isotropic(3, 0.5);
    let eps3 = p.mu() / 2.0;
    let sol = solve_are(&p, 1e-12, 100_000).unwrap();
    let plan = bounds::s_estimate_plan(&p, &pol, &sol, eps3, 0.05, &BoundOptions::default()).unwrap();
    for t in 0..20 {
        let est = audit::s_estimate_perturbed(&p, &pol, plan.r3, 50, plan.l, 9, t).unwrap();
        assert!(est >= p.mu() / 2.0);
    }
}

#[test]
fn reference_schedule_is_finite_and_consistent() {
    let p = SystemParams::reference_experiment();
    let sol = solve_are(&p, 1e-12, 100_000).unwrap();
    let start = GaussianPolicy::isotropic(3, 0.5);
    let rep = bounds::sbrpg_schedule(&p, &start, &sol, 1e-3, 0.05, &BoundOptions::default()).unwrap();
    for v in [rep.n_sb, rep.eps1, rep.eps2, rep.eps3, rep.kappa1, rep.kappa2, rep.kappa3] {
        let v = v.unwrap();
        assert!(v.is_finite() && v > 0.0);
    }
    let phi = rep.phi.unwrap();
    let ratio = (1.0 - phi).ln() / (1.0 - phi / 2.0).ln();
    assert!(ratio >= 1.0);
    assert!((rep.n_sb.unwrap() / rep.n_rpg.unwrap() - ratio).abs() < 1e-12);
    // Two-point initial law: L = 1 and every sample count is finite.
    assert!(rep.m_k.unwrap().is_finite() && rep.m_sigma.unwrap().is_finite());
}

#[test]
fn slack_adds_one_to_integer_outputs() {
    let p = SystemParams::reference_experiment();
    let sol = solve_are(&p, 1e-12, 100_000).unwrap();
    let start = GaussianPolicy::isotropic(3, 0.5);
    let a = bounds::sbrpg_schedule(&p, &start, &sol, 1e-3, 0.05, &BoundOptions::default()).unwrap();
    let b = bounds::sbrpg_schedule(&p, &start, &sol, 1e-3, 0.05, &BoundOptions { slack: true, ..Default::default() }).unwrap();
    for (x, y) in [(a.m_k, b.m_k), (a.l_k, b.l_k), (a.m_sigma, b.m_sigma), (a.l_sigma, b.l_sigma), (a.m_s, b.m_s), (a.l_s, b.l_s)] {
        // Counts past 2^53 absorb the extra unit.
        assert_eq!(x.unwrap() + 1.0, y.unwrap());
    }
}

#[test]
fn scaling_noise_coupling_never_shrinks_h2() {
    let base = SystemParams::reference_experiment();
    let sol = solve_are(&base, 1e-12, 100_000).unwrap();
    let pol = GaussianPolicy::isotropic(3, 0.5);
    let mut last = 0.0;
    for scale in [0.5, 1.0, 1.5, 2.0] {
        let mut p = base.clone();
        p.d = &base.d * scale;
        let rep = bounds::perturbation_report(&p, &pol, &sol, &BoundOptions::default()).unwrap();
        assert!(rep.h2 >= last);
        last = rep.h2;
    }
}
