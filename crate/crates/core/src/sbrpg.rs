//! Sample-based regularized policy gradient.
//!
//! Gradients are estimated by one-point zeroth-order smoothing: for U
//! uniform on the radius-r sphere of a d-dimensional space,
//! `grad f_r(x) = (d / r^2) E[f(x + U) U]`, with f replaced by the
//! discounted cost of a finite rollout. K perturbations live in R^n;
//! Sigma perturbations live in the n(n+1)/2-dimensional space of symmetric
//! matrices with the Frobenius metric.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{self, RiccatiSolution};
use crate::history::{RunHistory, RunRecord};
use crate::linalg;
use crate::model::{is_admissible, GaussianPolicy, Simulator, SystemParams};
use crate::rpg::{sigma_update, MAX_BACKTRACKS};
use crate::seed::{self, Purpose};

/// Uniform draw from the radius-r sphere in R^n.
pub fn sample_sphere_vec<G: Rng + ?Sized>(n: usize, r: f64, rng: &mut G) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 {
            return g * (r / norm);
        }
    }
}

/// Uniform draw from the Frobenius sphere of radius r within the symmetric
/// n x n matrices. Off-diagonal coordinates are weighted by 1/sqrt(2) so the
/// coordinate map is an isometry.
pub fn sample_sphere_sym<G: Rng + ?Sized>(n: usize, r: f64, rng: &mut G) -> DMatrix<f64> {
    loop {
        let mut m = DMatrix::zeros(n, n);
        let mut sq = 0.0;
        for i in 0..n {
            for j in i..n {
                let g: f64 = rng.sample(StandardNormal);
                sq += g * g;
                if i == j {
                    m[(i, i)] = g;
                } else {
                    let v = g * std::f64::consts::FRAC_1_SQRT_2;
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
        }
        if sq > 0.0 {
            return m * (r / sq.sqrt());
        }
    }
}

/// Seeded convenience wrapper around [`sample_sphere_vec`].
pub fn sample_sphere_vec_seeded(n: usize, r: f64, seed: u64) -> DVector<f64> {
    sample_sphere_vec(n, r, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Seeded convenience wrapper around [`sample_sphere_sym`].
pub fn sample_sphere_sym_seeded(n: usize, r: f64, seed: u64) -> DMatrix<f64> {
    sample_sphere_sym(n, r, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Smoothing coefficient convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoefficientMode {
    /// d / r^2 with d the dimension of the sampling space
    /// (n for K, n(n+1)/2 for symmetric Sigma).
    #[default]
    AmbientDim,
    /// n / r^2 for both estimators.
    PaperN,
}

impl CoefficientMode {
    pub fn k_dim(self, n: usize) -> f64 {
        n as f64
    }

    pub fn sigma_dim(self, n: usize) -> f64 {
        match self {
            CoefficientMode::AmbientDim => (n * (n + 1) / 2) as f64,
            CoefficientMode::PaperN => n as f64,
        }
    }
}

/// Where the per-sample function values come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostSource {
    /// Discounted cost of one simulated rollout of length l.
    #[default]
    Rollout,
    /// Closed-form cost (an exact function-value oracle).
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SbrpgConfig {
    /// Trajectories per estimate.
    pub m: usize,
    /// Rollout length.
    pub l: usize,
    pub r1: f64,
    pub r2: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// Outer iterations.
    pub n_iter: usize,
    pub seed: u64,
    pub coefficient_mode: CoefficientMode,
    pub cost_source: CostSource,
    /// Consecutive rejected draws tolerated per sample.
    pub max_redraws: usize,
    /// Report exact cost and distances to the optimum in the history.
    pub oracle_eval: bool,
    pub record_every: usize,
}

impl Default for SbrpgConfig {
    fn default() -> Self {
        SbrpgConfig {
            m: 2000,
            l: 15,
            r1: 0.3,
            r2: 0.025,
            eta1: 0.005,
            eta2: 0.025,
            n_iter: 300,
            seed: 0,
            coefficient_mode: CoefficientMode::AmbientDim,
            cost_source: CostSource::Rollout,
            max_redraws: 100,
            oracle_eval: true,
            record_every: 1,
        }
    }
}

impl SbrpgConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.m == 0 {
            return bad("sbrpg.m must be at least 1");
        }
        if self.l == 0 {
            return bad("sbrpg.l must be at least 1");
        }
        if !(self.r1 > 0.0 && self.r2 > 0.0) {
            return bad("sbrpg smoothing radii must be positive");
        }
        if !(self.eta1 > 0.0 && self.eta2 > 0.0) {
            return bad("sbrpg step sizes must be positive");
        }
        if self.max_redraws == 0 {
            return bad("sbrpg.max_redraws must be at least 1");
        }
        if self.record_every == 0 {
            return bad("sbrpg.record_every must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate<T> {
    pub value: T,
    pub samples_used: usize,
    /// Perturbations redrawn because the perturbed policy was inadmissible
    /// or its rollout diverged.
    pub rejected: usize,
    /// Root-mean-square over coordinates of the per-sample standard
    /// deviation; the standard error of `value` is this over sqrt(M).
    pub empirical_std: f64,
}

/// One accepted perturbation.
struct Sample<T> {
    perturbation: T,
    cost: f64,
    sq_states: f64,
    rejected: usize,
}

/// Evaluates the M samples in parallel; results are collected in index
/// order so the reduction does not depend on scheduling.
fn run_samples<T, D>(m: usize, draw_and_eval: D) -> Result<Vec<Sample<T>>>
where
    T: Send,
    D: Fn(usize) -> Result<Sample<T>> + Sync + Send,
{
    let out: Vec<Result<Sample<T>>> = (0..m).into_par_iter().map(draw_and_eval).collect();
    out.into_iter().collect()
}

/// Evaluates one perturbed policy, or `None` if it must be redrawn.
fn perturbed_value<G: Rng + ?Sized>(
    params: &SystemParams,
    cfg: &SbrpgConfig,
    sim: Option<&Simulator>,
    policy: &GaussianPolicy,
    rng: &mut G,
) -> Result<Option<(f64, f64)>> {
    match cfg.cost_source {
        CostSource::Exact => {
            let f = eval::cost_f(params, &policy.k, &policy.sigma)?;
            let s = eval::s_k_sigma(params, &policy.k, &policy.sigma)?;
            Ok(Some((f, s)))
        }
        CostSource::Rollout => {
            let owned;
            let sim = match sim {
                Some(s) => s,
                None => {
                    owned = Simulator::new(params, policy)?;
                    &owned
                }
            };
            match sim.summary(cfg.l, rng) {
                Ok(s) => Ok(Some((s.discounted_cost, s.discounted_sq_states))),
                Err(Error::TrajectoryDiverged { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        }
    }
}

fn rms_std(columns: &[Vec<f64>]) -> f64 {
    if columns.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for col in columns {
        let n = col.len() as f64;
        if col.len() < 2 {
            continue;
        }
        let mean = col.iter().sum::<f64>() / n;
        acc += col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    }
    (acc / columns.len() as f64).sqrt()
}

/// Estimates grad_K f and S at (K, Sigma) from M perturbed rollouts; the same
/// rollouts serve both estimates.
pub fn estimate_grad_k_and_s(
    params: &SystemParams,
    policy: &GaussianPolicy,
    cfg: &SbrpgConfig,
    master_seed: u64,
    iteration: u64,
) -> Result<(GradientEstimate<DVector<f64>>, GradientEstimate<f64>)> {
    let n = params.n();
    let base_sim = match cfg.cost_source {
        CostSource::Rollout => Some(Simulator::new(params, policy)?),
        CostSource::Exact => None,
    };
    let samples = run_samples(cfg.m, |i| -> Result<Sample<DVector<f64>>> {
        let mut prng = seed::rng(master_seed, iteration, i as u64, Purpose::PerturbK);
        let mut rrng = seed::rng(master_seed, iteration, i as u64, Purpose::RolloutK);
        let mut rejected = 0;
        loop {
            if rejected >= cfg.max_redraws {
                return Err(Error::RadiusExceedsMargin { attempts: rejected });
            }
            let u = sample_sphere_vec(n, cfg.r1, &mut prng);
            let k = &policy.k + &u;
            if !(params.gamma * crate::model::v_k(params, &k) < 1.0) {
                rejected += 1;
                continue;
            }
            let sim = base_sim.as_ref().map(|s| s.with_gain(&k));
            let pert = GaussianPolicy::new(k, policy.sigma.clone());
            match perturbed_value(params, cfg, sim.as_ref(), &pert, &mut rrng)? {
                Some((cost, sq_states)) => {
                    return Ok(Sample {
                        perturbation: u,
                        cost,
                        sq_states,
                        rejected,
                    })
                }
                None => rejected += 1,
            }
        }
    })?;

    let coef = cfg.coefficient_mode.k_dim(n) / (cfg.r1 * cfg.r1);
    let m = cfg.m as f64;
    let mut grad = DVector::zeros(n);
    let mut s_hat = 0.0;
    let mut rejected = 0;
    let mut cols = vec![Vec::with_capacity(cfg.m); n];
    let mut s_col = Vec::with_capacity(cfg.m);
    for s in &samples {
        let term = &s.perturbation * (coef * s.cost);
        grad += &term;
        s_hat += s.sq_states;
        rejected += s.rejected;
        for (c, v) in cols.iter_mut().zip(term.iter()) {
            c.push(*v);
        }
        s_col.push(s.sq_states);
    }
    Ok((
        GradientEstimate {
            value: grad / m,
            samples_used: cfg.m,
            rejected,
            empirical_std: rms_std(&cols),
        },
        GradientEstimate {
            value: s_hat / m,
            samples_used: cfg.m,
            rejected,
            empirical_std: rms_std(std::slice::from_ref(&s_col)),
        },
    ))
}

/// Estimates grad_Sigma f at (K, Sigma) from M rollouts under symmetric
/// Frobenius-sphere perturbations of Sigma. Also returns the mean
/// perturbed cost.
pub fn estimate_grad_sigma(
    params: &SystemParams,
    policy: &GaussianPolicy,
    cfg: &SbrpgConfig,
    master_seed: u64,
    iteration: u64,
) -> Result<(GradientEstimate<DMatrix<f64>>, f64)> {
    let n = params.n();
    let gain_ok = params.gamma * crate::model::v_k(params, &policy.k) < 1.0;
    if !gain_ok {
        return Err(eval::p_k(params, &policy.k).unwrap_err());
    }
    let samples = run_samples(cfg.m, |i| -> Result<Sample<DMatrix<f64>>> {
        let mut prng = seed::rng(master_seed, iteration, i as u64, Purpose::PerturbSigma);
        let mut rrng = seed::rng(master_seed, iteration, i as u64, Purpose::RolloutSigma);
        let mut rejected = 0;
        loop {
            if rejected >= cfg.max_redraws {
                return Err(Error::RadiusExceedsMargin { attempts: rejected });
            }
            let v = sample_sphere_sym(n, cfg.r2, &mut prng);
            let pert = GaussianPolicy::new(policy.k.clone(), &policy.sigma + &v);
            if !linalg::is_positive_definite(&pert.sigma) {
                rejected += 1;
                continue;
            }
            let outcome = match perturbed_value(params, cfg, None, &pert, &mut rrng) {
                Err(Error::DegenerateCovariance) => None,
                other => other?,
            };
            match outcome {
                Some((cost, sq_states)) => {
                    return Ok(Sample {
                        perturbation: v,
                        cost,
                        sq_states,
                        rejected,
                    })
                }
                None => rejected += 1,
            }
        }
    })?;

    let coef = cfg.coefficient_mode.sigma_dim(n) / (cfg.r2 * cfg.r2);
    let m = cfg.m as f64;
    let mut grad = DMatrix::zeros(n, n);
    let mut rejected = 0;
    let mut cost_sum = 0.0;
    let mut cols = vec![Vec::with_capacity(cfg.m); n * (n + 1) / 2];
    for s in &samples {
        let term = &s.perturbation * (coef * s.cost);
        grad += &term;
        rejected += s.rejected;
        cost_sum += s.cost;
        let mut c = 0;
        for i in 0..n {
            for j in i..n {
                cols[c].push(term[(i, j)]);
                c += 1;
            }
        }
    }
    Ok((
        GradientEstimate {
            value: linalg::symmetrize(&(grad / m)),
            samples_used: cfg.m,
            rejected,
            empirical_std: rms_std(&cols),
        },
        cost_sum / m,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub grad_k: GradientEstimate<DVector<f64>>,
    pub s_hat: GradientEstimate<f64>,
    pub grad_sigma: GradientEstimate<DMatrix<f64>>,
    /// Mean rollout cost under the Sigma perturbations at the updated K.
    pub f_estimate: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub backtracks: usize,
}

/// One iteration: estimate at (K, Sigma) and update K; then estimate the
/// Sigma gradient at (K', Sigma) and update Sigma.
pub fn sbrpg_step(
    params: &SystemParams,
    policy: &GaussianPolicy,
    cfg: &SbrpgConfig,
    master_seed: u64,
    iteration: u64,
) -> Result<(GaussianPolicy, StepDiagnostics)> {
    let (gk, s_hat) = estimate_grad_k_and_s(params, policy, cfg, master_seed, iteration)?;
    if !(s_hat.value > 0.0) {
        return Err(Error::InvalidParams(format!("non-positive S estimate {}", s_hat.value)));
    }
    let mut eta1 = cfg.eta1;
    let mut backtracks = 0;
    let k_next = loop {
        let k = &policy.k - &gk.value * (eta1 / s_hat.value);
        if params.gamma * crate::model::v_k(params, &k) < 1.0 {
            break k;
        }
        if backtracks >= MAX_BACKTRACKS {
            return Err(Error::StepInadmissible {
                from: Box::new(policy.clone()),
                to: Box::new(GaussianPolicy::new(k, policy.sigma.clone())),
            });
        }
        backtracks += 1;
        eta1 *= 0.5;
        warn!("iteration {iteration}: K update inadmissible, halving eta1 to {eta1}");
    };

    let mid = GaussianPolicy::new(k_next, policy.sigma.clone());
    let (gs, f_estimate) = estimate_grad_sigma(params, &mid, cfg, master_seed, iteration)?;
    let mut eta2 = cfg.eta2;
    let next = loop {
        let cand = GaussianPolicy::new(mid.k.clone(), sigma_update(&mid.sigma, &gs.value, eta2));
        if is_admissible(params, &cand) {
            break cand;
        }
        if backtracks >= MAX_BACKTRACKS {
            return Err(Error::StepInadmissible {
                from: Box::new(policy.clone()),
                to: Box::new(cand),
            });
        }
        backtracks += 1;
        eta2 *= 0.5;
        warn!("iteration {iteration}: Sigma update inadmissible, halving eta2 to {eta2}");
    };
    Ok((
        next,
        StepDiagnostics {
            grad_k: gk,
            s_hat,
            grad_sigma: gs,
            f_estimate,
            eta1,
            eta2,
            backtracks,
        },
    ))
}

/// Runs `cfg.n_iter` sample-based iterations from `start`.
///
/// `solution` is only used for reporting (exact cost, gap and distances,
/// flagged `oracle_eval`); the iterates never see it.
pub fn run_sbrpg(
    params: &SystemParams,
    start: &GaussianPolicy,
    cfg: &SbrpgConfig,
    solution: Option<&RiccatiSolution>,
) -> Result<RunHistory> {
    cfg.validate()?;
    params.validate()?;
    if !is_admissible(params, start) {
        return Err(Error::InvalidParams("initial policy is not admissible".into()));
    }
    let oracle = if cfg.oracle_eval { solution } else { None };
    let annotate = |mut r: RunRecord, pol: &GaussianPolicy| -> Result<RunRecord> {
        if let Some(sol) = oracle {
            let f = eval::cost_f(params, &pol.k, &pol.sigma)?;
            r = r.with_oracle(f, sol);
            r.oracle_eval = true;
        }
        Ok(r)
    };

    let mut history = RunHistory {
        f_star: oracle.map(|s| s.f_star),
        master_seed: Some(cfg.seed),
        ..Default::default()
    };
    let mut policy = start.clone();
    let mut record = annotate(RunRecord::new(0, policy.k.clone(), policy.sigma.clone()), &policy)?;
    record.eta1 = Some(cfg.eta1);
    record.eta2 = Some(cfg.eta2);
    history.push(record.clone());

    for it in 1..=cfg.n_iter {
        let (next, diag) = match sbrpg_step(params, &policy, cfg, cfg.seed, it as u64) {
            Ok(v) => v,
            Err(e) => {
                return Err(Error::RunAborted {
                    last: Box::new(record),
                    source: Box::new(e),
                })
            }
        };
        policy = next;
        let mut r = RunRecord::new(it, policy.k.clone(), policy.sigma.clone());
        r.f_estimate = Some(diag.f_estimate);
        r.eta1 = Some(diag.eta1);
        r.eta2 = Some(diag.eta2);
        r.s_hat = Some(diag.s_hat.value);
        r.grad_k_std = Some(diag.grad_k.empirical_std);
        r.grad_sigma_std = Some(diag.grad_sigma.empirical_std);
        r.rejected = diag.grad_k.rejected + diag.grad_sigma.rejected;
        r.backtracks = diag.backtracks;
        record = annotate(r, &policy)?;
        if it % cfg.record_every == 0 {
            history.push(record.clone());
        }
    }
    history.push(record);
    history.iterations = cfg.n_iter;
    history.converged = true;
    debug!("sbrpg finished {} iterations", cfg.n_iter);
    Ok(history)
}
