//! Model-based regularized policy gradient.
//!
//! ```text
//! K     <- K - eta1 E_K                       (gradient preconditioned by 1/S)
//! Sigma <- Sigma - eta2 Sigma grad_Sigma f Sigma
//! ```

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::eval::{self, RiccatiSolution};
use crate::history::{RunHistory, RunRecord};
use crate::linalg;
use crate::model::{is_admissible, GaussianPolicy, SystemParams};

/// Number of step halvings tried before a run gives up.
pub const MAX_BACKTRACKS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum StepSize {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpgConfig {
    pub eta1: StepSize,
    pub eta2: StepSize,
    pub epsilon: f64,
    pub max_iter: usize,
    pub record_every: usize,
    /// Recompute automatic steps at every iterate instead of once at the start.
    pub recompute_steps: bool,
    pub are_tol: f64,
    pub are_max_iter: usize,
}

impl Default for RpgConfig {
    fn default() -> Self {
        RpgConfig {
            eta1: StepSize::Auto,
            eta2: StepSize::Auto,
            epsilon: 1e-6,
            max_iter: 100_000,
            record_every: 1,
            recompute_steps: false,
            are_tol: 1e-12,
            are_max_iter: 100_000,
        }
    }
}

impl RpgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("rpg.epsilon must be positive".into()));
        }
        for (name, s) in [("eta1", self.eta1), ("eta2", self.eta2)] {
            if let StepSize::Fixed(v) = s {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidConfig(format!("rpg.{name} must be positive")));
                }
            }
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig("rpg.record_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// One exact update. Fails with `StepInadmissible` if the new policy leaves
/// the admissible set.
pub fn rpg_step(params: &SystemParams, policy: &GaussianPolicy, eta1: f64, eta2: f64) -> Result<GaussianPolicy> {
    let (k, sigma) = (&policy.k, &policy.sigma);
    let e = eval::e_k(params, k)?;
    let g = eval::grad_sigma(params, k, sigma)?;
    let next = GaussianPolicy::new(k - e * eta1, sigma_update(sigma, &g, eta2));
    if !is_admissible(params, &next) {
        return Err(Error::StepInadmissible {
            from: Box::new(policy.clone()),
            to: Box::new(next),
        });
    }
    Ok(next)
}

/// Sigma - eta Sigma G Sigma, symmetrized.
pub(crate) fn sigma_update(sigma: &DMatrix<f64>, g: &DMatrix<f64>, eta: f64) -> DMatrix<f64> {
    linalg::symmetrize(&(sigma - sigma * g * sigma * eta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub eta1: f64,
    pub eta2: f64,
    /// True when sigma_min(R) <= pi tau and the simpler eta1 was used.
    pub fallback: bool,
}

/// Automatic step sizes:
///
/// ```text
/// eta1 = min{ 1/(|R| + gamma/mu |Bt| (f - tau n/(2(1-gamma)) log(sigma_min(R)/(pi tau)))),
///             2/(tau sigma_min(Sigma)) }
/// eta2 = 2 tau (1-gamma) eta1^2
/// ```
///
/// When the logarithm is undefined the first argument becomes
/// `1/(|R| + gamma P_K |Bt|)`.
pub fn auto_step_sizes(params: &SystemParams, policy: &GaussianPolicy) -> Result<StepSizes> {
    let (k, sigma) = (&policy.k, &policy.sigma);
    let r_norm = params.r_norm();
    let bt_norm = linalg::spectral_norm(&params.noise_coupling());
    let n = params.n() as f64;
    let g = params.gamma;
    let r_min = params.r_sigma_min();
    let pt = std::f64::consts::PI * params.tau;
    let (first, fallback) = if r_min > pt {
        let f = eval::cost_f(params, k, sigma)?;
        let shift = params.tau * n / (2.0 * (1.0 - g)) * (r_min / pt).ln();
        (1.0 / (r_norm + g / params.mu() * bt_norm * (f - shift)), false)
    } else {
        let p = eval::p_k(params, k)?;
        (1.0 / (r_norm + g * p * bt_norm), true)
    };
    let second = 2.0 / (params.tau * linalg::min_eigenvalue(sigma));
    let eta1 = first.min(second);
    if !(eta1 > 0.0 && eta1.is_finite()) {
        return Err(Error::InvalidParams(format!("automatic step size is not positive: {eta1}")));
    }
    Ok(StepSizes {
        eta1,
        eta2: 2.0 * params.tau * (1.0 - g) * eta1 * eta1,
        fallback,
    })
}

/// Per-step contraction factor
/// `phi = min{eta1 mu sigma_min(R) / S*, eta2 a sigma_min(R) / (2(1-gamma))}`
/// with `a = tau eta1`.
pub fn contraction_phi(params: &SystemParams, solution: &RiccatiSolution, eta1: f64, eta2: f64) -> Result<f64> {
    let r_min = params.r_sigma_min();
    let a = params.tau * eta1;
    let phi_k = eta1 * params.mu() * r_min / solution.s_star;
    let phi_sigma = eta2 * a * r_min / (2.0 * (1.0 - params.gamma));
    let phi = phi_k.min(phi_sigma);
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::ContractionPrecondition { phi });
    }
    Ok(phi)
}

/// Iterations after which the gap is guaranteed below `epsilon`:
/// `max{S*/(2 mu eta1 sigma_min(R)), 1/(tau^2 eta1^3 sigma_min(R))} log(gap0/epsilon)`.
pub fn theoretical_iterations(params: &SystemParams, solution: &RiccatiSolution, eta1: f64, gap0: f64, epsilon: f64) -> f64 {
    let r_min = params.r_sigma_min();
    let first = solution.s_star.abs() / (2.0 * params.mu() * eta1 * r_min);
    let second = 1.0 / (params.tau * params.tau * eta1.powi(3) * r_min);
    first.max(second) * (gap0 / epsilon).ln().max(0.0)
}

fn resolve_steps(params: &SystemParams, policy: &GaussianPolicy, cfg: &RpgConfig) -> Result<(f64, f64)> {
    let auto = match (cfg.eta1, cfg.eta2) {
        (StepSize::Fixed(_), StepSize::Fixed(_)) => None,
        _ => Some(auto_step_sizes(params, policy)?),
    };
    let pick = |s: StepSize, auto_v: Option<f64>| match s {
        StepSize::Fixed(v) => v,
        StepSize::Auto => auto_v.expect("auto steps computed"),
    };
    Ok((
        pick(cfg.eta1, auto.map(|a| a.eta1)),
        pick(cfg.eta2, auto.map(|a| a.eta2)),
    ))
}

/// Runs exact policy gradient from `start` until the gap to the Riccati
/// optimum is below `cfg.epsilon` or `cfg.max_iter` steps were taken.
pub fn run_rpg(params: &SystemParams, start: &GaussianPolicy, cfg: &RpgConfig) -> Result<RunHistory> {
    cfg.validate()?;
    params.validate()?;
    if !is_admissible(params, start) {
        return Err(Error::InvalidParams("initial policy is not admissible".into()));
    }
    if linalg::max_eigenvalue(&start.sigma) > 1.0 {
        warn!("initial covariance is not below the identity; convergence guarantees do not apply");
    }
    let solution = eval::solve_are(params, cfg.are_tol, cfg.are_max_iter)?;
    let fixed_steps = matches!((cfg.eta1, cfg.eta2), (StepSize::Fixed(_), StepSize::Fixed(_)));

    let (mut eta1, mut eta2) = resolve_steps(params, start, cfg)?;
    let phi = contraction_phi(params, &solution, eta1, eta2).ok();

    let f0 = eval::cost_f(params, &start.k, &start.sigma)?;
    let gap0 = f0 - solution.f_star;

    let make_record = |iter: usize, pol: &GaussianPolicy, f: f64, e1: f64, e2: f64, phi: Option<f64>, bt: usize| {
        let mut r = RunRecord::new(iter, pol.k.clone(), pol.sigma.clone()).with_oracle(f, &solution);
        r.eta1 = Some(e1);
        r.eta2 = Some(e2);
        r.phi = phi;
        r.backtracks = bt;
        r.oracle_eval = true;
        r
    };

    let mut history = RunHistory {
        f_star: Some(solution.f_star),
        theoretical_iterations: phi.map(|_| theoretical_iterations(params, &solution, eta1, gap0, cfg.epsilon)),
        ..Default::default()
    };
    let mut policy = start.clone();
    let mut f = f0;
    let mut record = make_record(0, &policy, f, eta1, eta2, phi, 0);
    history.push(record.clone());

    let mut iter = 0;
    while f - solution.f_star > cfg.epsilon && iter < cfg.max_iter {
        if cfg.recompute_steps && !fixed_steps {
            (eta1, eta2) = resolve_steps(params, &policy, cfg)?;
        }
        let mut backtracks = 0;
        let next = loop {
            match rpg_step(params, &policy, eta1, eta2) {
                Ok(p) => break p,
                Err(Error::StepInadmissible { .. }) if fixed_steps && backtracks < MAX_BACKTRACKS => {
                    backtracks += 1;
                    eta1 *= 0.5;
                    eta2 *= 0.5;
                    warn!("iteration {}: inadmissible step, halving steps to ({eta1}, {eta2})", iter + 1);
                }
                Err(e) => {
                    return Err(Error::RunAborted {
                        last: Box::new(record),
                        source: Box::new(e),
                    })
                }
            }
        };
        iter += 1;
        policy = next;
        f = eval::cost_f(params, &policy.k, &policy.sigma)?;
        let phi_now = if backtracks > 0 || cfg.recompute_steps {
            contraction_phi(params, &solution, eta1, eta2).ok()
        } else {
            phi
        };
        record = make_record(iter, &policy, f, eta1, eta2, phi_now, backtracks);
        if iter % cfg.record_every == 0 {
            history.push(record.clone());
        }
    }
    history.push(record);
    history.iterations = iter;
    history.converged = f - solution.f_star <= cfg.epsilon;
    debug!("rpg finished after {iter} iterations, gap {}", f - solution.f_star);
    Ok(history)
}

/// Exact conditional optimum of Sigma for a fixed K: (tau/2) M_K^{-1}.
pub fn sigma_star_given_k(params: &SystemParams, k: &DVector<f64>) -> Result<DMatrix<f64>> {
    let m = eval::m_k(params, k)?;
    Ok(linalg::spd_inverse(&m).ok_or(Error::DegenerateCovariance)? * (0.5 * params.tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> SystemParams {
        SystemParams::reference_experiment()
    }

    #[test]
    fn optimum_is_a_fixed_point() {
        let p = reference();
        let sol = eval::solve_are(&p, 1e-13, 10_000).unwrap();
        let steps = auto_step_sizes(&p, &sol.policy()).unwrap();
        let next = rpg_step(&p, &sol.policy(), steps.eta1, steps.eta2).unwrap();
        assert!((&next.k - &sol.k_star).norm() <= 1e-10);
        assert!((&next.sigma - &sol.sigma_star).norm() <= 1e-10);
    }

    #[test]
    fn reference_auto_steps() {
        let p = reference();
        let start = GaussianPolicy::isotropic(3, 0.5);
        let s = auto_step_sizes(&p, &start).unwrap();
        assert!(!s.fallback);
        assert_relative_eq!(s.eta1, 0.774_643_392_208_413_8, epsilon = 1e-12);
        assert_relative_eq!(s.eta2 / (s.eta1 * s.eta1), 2.0 * p.tau * (1.0 - p.gamma), epsilon = 1e-15);
        let m = eval::m_k(&p, &start.k).unwrap();
        assert!(s.eta1 * linalg::spectral_norm(&m) <= 1.0);
    }

    #[test]
    fn first_step_decreases_cost() {
        let p = reference();
        let start = GaussianPolicy::isotropic(3, 0.5);
        let s = auto_step_sizes(&p, &start).unwrap();
        let next = rpg_step(&p, &start, s.eta1, s.eta2).unwrap();
        let f0 = eval::cost_f(&p, &start.k, &start.sigma).unwrap();
        let f1 = eval::cost_f(&p, &next.k, &next.sigma).unwrap();
        assert!(f1 < f0);
    }

    #[test]
    fn phi_reference_value() {
        let p = reference();
        let sol = eval::solve_are(&p, 1e-12, 10_000).unwrap();
        let s = auto_step_sizes(&p, &GaussianPolicy::isotropic(3, 0.5)).unwrap();
        let phi = contraction_phi(&p, &sol, s.eta1, s.eta2).unwrap();
        assert_relative_eq!(phi, 0.004_648_421_079_583_833, epsilon = 1e-12);
        assert!(phi <= s.eta1 * p.mu() * p.r_sigma_min() / sol.s_star);
        let doubled = contraction_phi(&p, &sol, 2.0 * s.eta1, s.eta2);
        assert!(matches!(doubled, Ok(v) if v >= phi));
    }

    #[test]
    fn oversized_steps_fail_contraction_check() {
        let p = reference();
        let sol = eval::solve_are(&p, 1e-12, 10_000).unwrap();
        assert!(matches!(
            contraction_phi(&p, &sol, 100.0, 1000.0),
            Err(Error::ContractionPrecondition { .. })
        ));
    }

    #[test]
    fn start_at_optimum_terminates_immediately() {
        let p = reference();
        let sol = eval::solve_are(&p, 1e-12, 10_000).unwrap();
        let h = run_rpg(&p, &sol.policy(), &RpgConfig::default()).unwrap();
        assert_eq!(h.iterations, 0);
        assert_eq!(h.records.len(), 1);
        assert!(h.converged);
    }

    #[test]
    fn fixed_steps_backtrack() {
        let p = reference();
        let cfg = RpgConfig {
            eta1: StepSize::Fixed(50.0),
            eta2: StepSize::Fixed(50.0),
            max_iter: 3,
            ..Default::default()
        };
        let h = run_rpg(&p, &GaussianPolicy::isotropic(3, 0.5), &cfg).unwrap();
        assert!(h.records[1].backtracks > 0);
    }
}
