//! Randomized audits of the analytic inequalities: gradient domination,
//! gradient-norm bounds, almost-smoothness, the Sigma cone, the cost lower
//! bound and the perturbation moduli.
//!
//! Every suite draws instances from a seeded stream, half on the reference
//! system and half on random systems, and records the worst ratio
//! `lhs / rhs` (a violation is any ratio above one beyond rounding).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::{self, BoundOptions};
use crate::eval::{self, RiccatiSolution};
use crate::linalg;
use crate::model::{GaussianPolicy, InitialStateDist, SystemParams};
use crate::rpg;
use crate::sampling::{random_spd, PolicySampler};
use crate::sbrpg::{sample_sphere_sym, sample_sphere_vec};

const REL_TOL: f64 = 1e-9;
const ABS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub checked: usize,
    pub violations: usize,
    pub max_ratio: f64,
    /// False for suites that audit a stated constant known to be too
    /// small; those are reported but not expected to pass.
    pub required: bool,
}

impl SuiteResult {
    fn new(name: &str, required: bool) -> Self {
        SuiteResult {
            name: name.to_string(),
            checked: 0,
            violations: 0,
            max_ratio: 0.0,
            required,
        }
    }

    /// Records `lhs <= rhs`.
    fn check(&mut self, lhs: f64, rhs: f64) {
        self.checked += 1;
        if lhs > rhs + REL_TOL * rhs.abs() + ABS_TOL || lhs.is_nan() || rhs.is_nan() {
            self.violations += 1;
        }
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs <= rhs {
            0.0
        } else {
            f64::INFINITY
        };
        if ratio.is_nan() {
            self.max_ratio = f64::NAN;
        } else if !self.max_ratio.is_nan() {
            self.max_ratio = self.max_ratio.max(ratio);
        }
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.violations == 0
    }
}

/// Random well-posed system with three controls.
pub fn random_system<G: Rng + ?Sized>(rng: &mut G) -> SystemParams {
    let n = 3;
    let gamma = rng.random_range(0.2..0.9);
    // Open loop mean-square stable under discount, so K = 0 is admissible.
    let c: f64 = rng.random_range(0.0..0.3);
    let a_max = (0.9 / gamma - c * c).sqrt();
    let a = rng.random_range(-a_max..a_max);
    let b = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
    let d = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.2..0.2));
    let q = rng.random_range(0.1..2.0);
    let eigs: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..2.0)).collect();
    let r = random_spd(&eigs, rng);
    let r_min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let tau = rng.random_range(0.02..0.9) * r_min;
    let init = match rng.random_range(0..3) {
        0 => InitialStateDist::TwoPoint { c: rng.random_range(0.5..1.5) },
        1 => InitialStateDist::Uniform { half_width: rng.random_range(0.5..2.0) },
        _ => InitialStateDist::Gaussian { std: rng.random_range(0.5..1.5) },
    };
    SystemParams::new(a, b, c, d, q, r, gamma, tau, init).expect("random system is valid")
}

struct Instance {
    params: SystemParams,
    solution: RiccatiSolution,
}

/// Seeded stream of systems with their Riccati solutions. Systems whose
/// optimum cannot be computed are skipped.
struct Systems {
    rng: ChaCha8Rng,
    reference: Instance,
}

impl Systems {
    fn new(seed: u64) -> Self {
        let params = SystemParams::reference_experiment();
        let solution = eval::solve_are(&params, 1e-13, 100_000).expect("reference Riccati solution");
        Systems {
            rng: ChaCha8Rng::seed_from_u64(seed),
            reference: Instance { params, solution },
        }
    }

    fn next(&mut self, i: usize) -> (Instance, &mut ChaCha8Rng) {
        if i.is_multiple_of(2) {
            let inst = Instance {
                params: self.reference.params.clone(),
                solution: self.reference.solution.clone(),
            };
            return (inst, &mut self.rng);
        }
        loop {
            let params = random_system(&mut self.rng);
            if let Ok(solution) = eval::solve_are(&params, 1e-13, 100_000) {
                return (Instance { params, solution }, &mut self.rng);
            }
        }
    }
}

/// Scale in (0, 1], with a fifth of the mass on the boundary.
fn radius_fraction<G: Rng + ?Sized>(rng: &mut G) -> f64 {
    if rng.random_bool(0.2) {
        1.0 - 1e-9
    } else {
        rng.random_range(1e-3..1.0)
    }
}

fn sampler() -> PolicySampler {
    PolicySampler {
        k_range: 1.0,
        max_gamma_v: 0.95,
        eig_lo: 0.05,
        eig_hi: 2.0,
    }
}

/// Gradient domination: lower side with `mu/(4|M_K|)`, upper side with
/// both `1/(mu sigma_min R)` and `S*/(mu^2 sigma_min R)` on `Sigma <= I`.
/// The stated `mu/|M_K|` lower constant and the upper side without the
/// `Sigma <= I` restriction are audited separately.
pub fn gradient_domination(samples: usize, seed: u64) -> Vec<SuiteResult> {
    let mut lower = SuiteResult::new("gradient_domination_lower", true);
    let mut lower_stated = SuiteResult::new("gradient_domination_lower_printed_constant", false);
    let mut upper = SuiteResult::new("gradient_domination_upper", true);
    let mut upper_app = SuiteResult::new("gradient_domination_upper_optimal_moment", true);
    let mut upper_wide = SuiteResult::new("gradient_domination_upper_unit_ball_dropped", false);
    let mut sys = Systems::new(seed);
    let smp = PolicySampler {
        eig_lo: 0.01,
        eig_hi: 1.0,
        ..sampler()
    };
    let wide = sampler();
    for i in 0..samples {
        let (inst, rng) = sys.next(i);
        let p = &inst.params;
        let pol_wide = wide.sample(p, rng);
        let gap_wide = eval::cost_f(p, &pol_wide.k, &pol_wide.sigma).unwrap() - inst.solution.f_star;
        let gk_wide = eval::grad_k(p, &pol_wide.k, &pol_wide.sigma).unwrap().norm_squared();
        let gs_wide = eval::grad_sigma(p, &pol_wide.k, &pol_wide.sigma).unwrap();
        upper_wide.check(
            gap_wide,
            gk_wide / (p.mu() * p.r_sigma_min()) + (1.0 - p.gamma) * linalg::trace_of_square(&gs_wide) / p.r_sigma_min(),
        );
        let pol = smp.sample(p, rng);
        let (k, s) = (&pol.k, &pol.sigma);
        let gap = eval::cost_f(p, k, s).unwrap() - inst.solution.f_star;
        let e = eval::e_k(p, k).unwrap();
        let m_norm = linalg::spectral_norm(&eval::m_k(p, k).unwrap());
        let mu = p.mu();
        lower.check(mu / (4.0 * m_norm) * e.norm_squared(), gap);
        lower_stated.check(mu / m_norm * e.norm_squared(), gap);
        let gk = eval::grad_k(p, k, s).unwrap().norm_squared();
        let gs = eval::grad_sigma(p, k, s).unwrap();
        let r_min = p.r_sigma_min();
        let sigma_part = (1.0 - p.gamma) * linalg::trace_of_square(&gs) / r_min;
        upper.check(gap, gk / (mu * r_min) + sigma_part);
        upper_app.check(gap, inst.solution.s_star / (mu * mu * r_min) * gk + sigma_part);
    }
    vec![lower, lower_stated, upper, upper_app, upper_wide]
}

/// Gradient-norm bounds, with the corrected lower domination constant in
/// the K bound.
pub fn gradient_norm_bounds(samples: usize, seed: u64) -> Vec<SuiteResult> {
    let mut gk_suite = SuiteResult::new("gradient_norm_k", true);
    let mut gs_suite = SuiteResult::new("gradient_norm_sigma", true);
    let mut sys = Systems::new(seed);
    let smp = sampler();
    let opts = BoundOptions::default();
    for i in 0..samples {
        let (inst, rng) = sys.next(i);
        let p = &inst.params;
        let pol = smp.sample(p, rng);
        let rep = bounds::perturbation_report(p, &pol, &inst.solution, &opts).unwrap();
        let gk = eval::grad_k(p, &pol.k, &pol.sigma).unwrap().norm();
        let gs = linalg::spectral_norm(&eval::grad_sigma(p, &pol.k, &pol.sigma).unwrap());
        gk_suite.check(gk, rep.grad_k_bound);
        gs_suite.check(gs, rep.grad_sigma_bound);
    }
    vec![gk_suite, gs_suite]
}

/// Covariance with spectrum inside (a, 1).
fn sigma_in_band<G: Rng + ?Sized>(n: usize, a: f64, rng: &mut G) -> DMatrix<f64> {
    let eigs: Vec<f64> = (0..n).map(|_| a + (1.0 - a) * rng.random_range(1e-3..0.999)).collect();
    random_spd(&eigs, rng)
}

/// Almost-smoothness. Checks the exact decomposition
/// `f' - f = S' [dK^T M_K dK + dK^T E_K] + q_{K,Sigma'} - q_{K,Sigma}` and
/// the upper bound with `m(a) = (a - 1 - log a)/(a-1)^2`.
pub fn almost_smoothness(samples: usize, seed: u64) -> Vec<SuiteResult> {
    let mut identity = SuiteResult::new("almost_smoothness_identity", true);
    let mut bound = SuiteResult::new("almost_smoothness_bound", true);
    let mut sys = Systems::new(seed);
    let smp = sampler();
    for i in 0..samples {
        let (inst, rng) = sys.next(i);
        let p = &inst.params;
        let n = p.n();
        let a: f64 = rng.random_range(0.01..0.9);
        let k = smp.sample_k(p, rng);
        let k2 = smp.sample_k(p, rng);
        let s = sigma_in_band(n, a, rng);
        let s2 = sigma_in_band(n, a, rng);
        let dk = &k2 - &k;
        let m_mat = eval::m_k(p, &k).unwrap();
        let e = eval::e_k(p, &k).unwrap();
        let s_new = eval::s_k_sigma(p, &k2, &s2).unwrap();
        let quad = dk.dot(&(&m_mat * &dk)) + dk.dot(&e);
        let q_old = eval::q_k_sigma(p, &k, &s).unwrap();
        let q_mid = eval::q_k_sigma(p, &k, &s2).unwrap();
        let lhs = eval::cost_f(p, &k2, &s2).unwrap() - eval::cost_f(p, &k, &s).unwrap();
        let rhs_id = s_new * quad + q_mid - q_old;
        let scale = 1.0 + lhs.abs().max(rhs_id.abs());
        identity.check((lhs - rhs_id).abs(), 1e-9 * scale);

        let s_inv = linalg::spd_inverse(&s).unwrap();
        let g = 1.0 - p.gamma;
        let grad_q = (&m_mat - &s_inv * (p.tau / 2.0)) / g;
        let ds = &s2 - &s;
        let curv = linalg::trace_of_square(&(&s_inv * &s2 - DMatrix::identity(n, n)));
        let rhs = s_new * quad + linalg::frob_dot(&grad_q, &ds) + p.tau * bounds::smoothness_m(a) / (2.0 * g) * curv;
        bound.check(lhs, rhs);
    }
    vec![identity, bound]
}

/// Sigma cone: one exact Sigma update with an admissible step keeps
/// `aI < Sigma' < I`.
pub fn sigma_cone(samples: usize, seed: u64) -> Vec<SuiteResult> {
    let mut lo = SuiteResult::new("sigma_cone_lower", true);
    let mut hi = SuiteResult::new("sigma_cone_upper", true);
    let mut sys = Systems::new(seed);
    let smp = PolicySampler {
        eig_lo: 0.01,
        eig_hi: 1.0,
        ..sampler()
    };
    for i in 0..samples {
        let (inst, rng) = sys.next(i);
        let p = &inst.params;
        let pol = smp.sample(p, rng);
        let m_norm = linalg::spectral_norm(&eval::m_k(p, &pol.k).unwrap());
        let a_max = (p.tau / (2.0 * m_norm)).min(linalg::min_eigenvalue(&pol.sigma));
        let a = a_max * rng.random_range(1e-3..0.999);
        let eta2 = 2.0 * (1.0 - p.gamma) * a * a / p.tau * radius_fraction(rng);
        let g = eval::grad_sigma(p, &pol.k, &pol.sigma).unwrap();
        let next = rpg::sigma_update(&pol.sigma, &g, eta2);
        let ev = linalg::sym_eigenvalues(&next);
        // Strict inequalities: a < ev_min and ev_max < 1.
        lo.check(a, ev[0] - ABS_TOL);
        hi.check(ev[ev.len() - 1], 1.0 - ABS_TOL);
    }
    vec![lo, hi]
}

/// Lower bound `f >= mu P_K + tau n/(2(1-gamma)) log(sigma_min(R)/(pi tau))`
/// whenever `sigma_min(R) > pi tau`.
pub fn cost_lower_bound(samples: usize, seed: u64) -> Vec<SuiteResult> {
    let mut suite = SuiteResult::new("cost_lower_bound", true);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let smp = sampler();
    let mut i = 0;
    while suite.checked < samples {
        let p = if i % 2 == 0 {
            SystemParams::reference_experiment()
        } else {
            random_system(&mut rng)
        };
        i += 1;
        let pol = smp.sample(&p, &mut rng);
        if let Some(lb) = eval::cost_lower_bound(&p, &pol.k).unwrap() {
            suite.check(lb, eval::cost_f(&p, &pol.k, &pol.sigma).unwrap());
        }
    }
    vec![suite]
}

struct Perturbed {
    k2: DVector<f64>,
    s2: DMatrix<f64>,
    dk: f64,
    ds: f64,
}

/// Perturbation with `|dK| <= k_radius` and `|dSigma|_F <= s_radius`,
/// rejecting covariances that leave the positive-definite cone.
fn perturb<G: Rng + ?Sized>(pol: &GaussianPolicy, k_radius: f64, s_radius: f64, rng: &mut G) -> Perturbed {
    let n = pol.n();
    let dk = sample_sphere_vec(n, k_radius * radius_fraction(rng), rng);
    loop {
        let ds = sample_sphere_sym(n, s_radius * radius_fraction(rng), rng);
        let s2 = linalg::symmetrize(&(&pol.sigma + &ds));
        if linalg::is_positive_definite(&s2) {
            return Perturbed {
                k2: &pol.k + &dk,
                dk: dk.norm(),
                ds: ds.norm(),
                s2,
            };
        }
    }
}

/// Perturbation moduli for S, P_K, the gradients and f.
pub fn perturbation_moduli(samples: usize, seed: u64) -> Vec<SuiteResult> {
    let mut s_suite = SuiteResult::new("s_perturbation", true);
    let mut p_suite = SuiteResult::new("p_perturbation", true);
    let mut gk_suite = SuiteResult::new("grad_k_perturbation", true);
    let mut gs_suite = SuiteResult::new("grad_sigma_perturbation", true);
    let mut gs_printed = SuiteResult::new("grad_sigma_perturbation_printed_h9", false);
    let mut f_suite = SuiteResult::new("f_perturbation", true);
    let mut sys = Systems::new(seed);
    let smp = sampler();
    let opts = BoundOptions::default();
    for i in 0..samples {
        let (inst, rng) = sys.next(i);
        let p = &inst.params;
        let pol = smp.sample(p, rng);
        let (k, s) = (&pol.k, &pol.sigma);
        let rep = bounds::perturbation_report(p, &pol, &inst.solution, &opts).unwrap();
        let k_norm = k.norm();
        let s_norm = linalg::spectral_norm(s);
        let s_min = linalg::min_eigenvalue(s);

        // S: |dK| <= h_Sigma, |dSigma| <= |Sigma|.
        let x = perturb(&pol, rep.h_sigma, s_norm, rng);
        let lhs = (eval::s_k_sigma(p, &x.k2, &x.s2).unwrap() - eval::s_k_sigma(p, k, s).unwrap()).abs();
        s_suite.check(lhs, rep.h_k * x.dk + rep.h2 * x.ds);

        // P_K: |dK| <= min{h_Sigma, |K|}.
        let kr = rep.h_sigma.min(k_norm);
        let x = perturb(&pol, kr, s_norm, rng);
        let lhs = (eval::p_k(p, &x.k2).unwrap() - eval::p_k(p, k).unwrap()).abs();
        p_suite.check(lhs, rep.h5 * x.dk);

        // Gradients: |dSigma|_F <= min{sigma_min/2, |Sigma|}.
        let sr = (s_min / 2.0).min(s_norm);
        let x = perturb(&pol, kr, sr, rng);
        let gk0 = eval::grad_k(p, k, s).unwrap();
        let gk1 = eval::grad_k(p, &x.k2, &x.s2).unwrap();
        gk_suite.check((gk1 - gk0).norm(), rep.h6 * x.dk + rep.h7 * x.ds);
        let gs0 = eval::grad_sigma(p, k, s).unwrap();
        let gs1 = eval::grad_sigma(p, &x.k2, &x.s2).unwrap();
        let lhs = linalg::spectral_norm(&(gs1 - gs0));
        gs_suite.check(lhs, rep.h8 * x.dk + rep.h9 * x.ds);
        gs_printed.check(lhs, rep.h8 * x.dk + rep.h9_stated * x.ds);

        // f: same radii as the gradients.
        let x = perturb(&pol, kr, sr, rng);
        let lhs = (eval::cost_f(p, &x.k2, &x.s2).unwrap() - eval::cost_f(p, k, s).unwrap()).abs();
        f_suite.check(lhs, rep.h10 * x.dk + rep.h11 * x.ds);
    }
    vec![s_suite, p_suite, gk_suite, gs_suite, gs_printed, f_suite]
}

/// Every suite with `samples` instances each.
pub fn all_suites(samples: usize, seed: u64) -> Vec<SuiteResult> {
    let mut out = Vec::new();
    out.extend(gradient_domination(samples, seed));
    out.extend(gradient_norm_bounds(samples, seed.wrapping_add(1)));
    out.extend(almost_smoothness(samples, seed.wrapping_add(2)));
    out.extend(sigma_cone(samples, seed.wrapping_add(3)));
    out.extend(cost_lower_bound(samples, seed.wrapping_add(4)));
    out.extend(perturbation_moduli(samples, seed.wrapping_add(5)));
    out
}
