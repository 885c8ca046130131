//! Numerical audits against independent oracles: finite differences,
//! Monte Carlo rollouts and empirical coverage of sample-size rules.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval;
use crate::linalg;
use crate::model::{GaussianPolicy, Simulator, SystemParams};
use crate::sampling::PolicySampler;
use crate::sbrpg::{
    estimate_grad_k_and_s, estimate_grad_sigma, sample_sphere_sym, sample_sphere_vec, CoefficientMode, CostSource,
    SbrpgConfig,
};
use crate::seed::{self, Purpose};

/// `count` admissible policies from the default sampler.
pub fn random_policies(params: &SystemParams, count: usize, seed: u64) -> Vec<GaussianPolicy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = PolicySampler::default();
    (0..count).map(|_| s.sample(params, &mut rng)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub index: usize,
    pub grad_k_norm: f64,
    pub grad_sigma_norm: f64,
    pub abs_err_k: f64,
    pub abs_err_sigma: f64,
    pub rel_err_k: f64,
    pub rel_err_sigma: f64,
}

fn rel(err: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

/// Compares the analytic gradients with central differences of `cost_f`.
/// Relative errors are taken against the analytic norm (absolute when it
/// vanishes).
pub fn gradcheck(params: &SystemParams, policies: &[GaussianPolicy], h: f64) -> Result<Vec<GradcheckRow>> {
    policies
        .iter()
        .enumerate()
        .map(|(index, pol)| {
            let gk = eval::grad_k(params, &pol.k, &pol.sigma)?;
            let gs = eval::grad_sigma(params, &pol.k, &pol.sigma)?;
            let (fk, fs) = eval::finite_difference_grads(params, &pol.k, &pol.sigma, h)?;
            let ek = (&gk - fk).norm();
            let es = (&gs - fs).norm();
            Ok(GradcheckRow {
                index,
                grad_k_norm: gk.norm(),
                grad_sigma_norm: gs.norm(),
                abs_err_k: ek,
                abs_err_sigma: es,
                rel_err_k: rel(ek, gk.norm()),
                rel_err_sigma: rel(es, gs.norm()),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub f_mean: f64,
    pub f_se: f64,
    pub s_mean: f64,
    pub s_se: f64,
    pub samples: usize,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Sample means and standard errors of the discounted cost and discounted
/// squared states over `m` independent rollouts of length `l`.
pub fn monte_carlo(params: &SystemParams, policy: &GaussianPolicy, m: usize, l: usize, seed: u64) -> Result<McEstimate> {
    let sim = Simulator::new(params, policy)?;
    let runs: Vec<(f64, f64)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(seed, 0, i as u64, Purpose::Report);
            sim.summary(l, &mut rng).map(|s| (s.discounted_cost, s.discounted_sq_states))
        })
        .collect::<Result<_>>()?;
    let (f, s): (Vec<f64>, Vec<f64>) = runs.into_iter().unzip();
    let (f_mean, f_se) = mean_se(&f);
    let (s_mean, s_se) = mean_se(&s);
    Ok(McEstimate {
        f_mean,
        f_se,
        s_mean,
        s_se,
        samples: m,
    })
}

/// Moment estimate from `m` rollouts under `K + U_i`, `|U_i| = r`.
pub fn s_estimate_perturbed(
    params: &SystemParams,
    policy: &GaussianPolicy,
    r: f64,
    m: usize,
    l: usize,
    seed: u64,
    trial: u64,
) -> Result<f64> {
    let sim = Simulator::new(params, policy)?;
    let n = params.n();
    let total: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut prng = seed::rng(seed, trial, i as u64, Purpose::PerturbK);
            let u = sample_sphere_vec(n, r, &mut prng);
            let mut rng = seed::rng(seed, trial, i as u64, Purpose::RolloutK);
            sim.with_gain(&(&policy.k + u))
                .summary(l, &mut rng)
                .map(|s| s.discounted_sq_states)
        })
        .collect::<Result<_>>()?;
    Ok(total.iter().sum::<f64>() / m as f64)
}

/// Fraction of `trials` independent estimates within `eps` of S.
#[allow(clippy::too_many_arguments)]
pub fn s_estimate_coverage(
    params: &SystemParams,
    policy: &GaussianPolicy,
    r: f64,
    m: usize,
    l: usize,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let s = eval::s_k_sigma(params, &policy.k, &policy.sigma)?;
    let mut hits = 0;
    for t in 0..trials {
        let est = s_estimate_perturbed(params, policy, r, m, l, seed, t as u64)?;
        if (est - s).abs() < eps {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// Fraction of `trials` sample means of `n_samples` vectors, uniform on the
/// radius-`rho` sphere of R^dim, whose norm is at most `eps`.
pub fn sphere_mean_coverage(dim: usize, rho: f64, n_samples: u64, eps: f64, trials: usize, seed: u64) -> f64 {
    let hits: usize = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed, t as u64, 0, Purpose::Other);
            let mut sum = DVector::zeros(dim);
            for _ in 0..n_samples {
                sum += sample_sphere_vec(dim, rho, &mut rng);
            }
            usize::from(sum.norm() / n_samples as f64 <= eps)
        })
        .sum();
    hits as f64 / trials as f64
}

/// Exact-cost audit of the zeroth-order estimators at one policy.
///
/// `raw_*` are the errors of the estimators as run. Each estimate also
/// contains the zero-mean term `(d/r^2) f(x) mean(U)`, which dominates its
/// variance at small radii; `centered_*` subtract that term (recomputed
/// from the same perturbation streams) and isolate the coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientCheck {
    pub mode: CoefficientMode,
    pub raw_err_k: f64,
    pub raw_err_sigma: f64,
    pub centered_err_k: f64,
    pub centered_err_sigma: f64,
    /// `1e-2 (1 + |true gradient|)`.
    pub tol_k: f64,
    pub tol_sigma: f64,
    /// `<centered, true> / |true|^2` for the Sigma estimator.
    pub sigma_scale: f64,
}

pub fn coefficient_check(
    params: &SystemParams,
    policy: &GaussianPolicy,
    mode: CoefficientMode,
    r: f64,
    m: usize,
    seed: u64,
) -> Result<CoefficientCheck> {
    let n = params.n();
    let cfg = SbrpgConfig {
        m,
        r1: r,
        r2: r,
        cost_source: CostSource::Exact,
        coefficient_mode: mode,
        ..SbrpgConfig::default()
    };
    let gk = eval::grad_k(params, &policy.k, &policy.sigma)?;
    let gs = eval::grad_sigma(params, &policy.k, &policy.sigma)?;
    let f0 = eval::cost_f(params, &policy.k, &policy.sigma)?;
    let (ek, _) = estimate_grad_k_and_s(params, policy, &cfg, seed, 0)?;
    let (es, _) = estimate_grad_sigma(params, policy, &cfg, seed, 0)?;
    if ek.rejected + es.rejected > 0 {
        return Err(Error::InvalidParams("coefficient audit needs a radius without redraws".into()));
    }
    // First draw of every perturbation stream, as consumed by the estimators.
    let mut mean_u = DVector::zeros(n);
    let mut mean_v = DMatrix::zeros(n, n);
    for i in 0..m as u64 {
        mean_u += sample_sphere_vec(n, r, &mut seed::rng(seed, 0, i, Purpose::PerturbK));
        mean_v += sample_sphere_sym(n, r, &mut seed::rng(seed, 0, i, Purpose::PerturbSigma));
    }
    let mf = m as f64;
    let base_k = mean_u * (mode.k_dim(n) / (r * r) * f0 / mf);
    let base_s = mean_v * (mode.sigma_dim(n) / (r * r) * f0 / mf);
    let centered_k = &ek.value - base_k;
    let centered_s = &es.value - base_s;
    Ok(CoefficientCheck {
        mode,
        raw_err_k: (&ek.value - &gk).norm(),
        raw_err_sigma: (&es.value - &gs).norm(),
        centered_err_k: (&centered_k - &gk).norm(),
        centered_err_sigma: (&centered_s - &gs).norm(),
        tol_k: 1e-2 * (1.0 + gk.norm()),
        tol_sigma: 1e-2 * (1.0 + gs.norm()),
        sigma_scale: linalg::frob_dot(&centered_s, &gs) / gs.norm_squared(),
    })
}
