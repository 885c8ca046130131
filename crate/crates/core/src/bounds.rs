//! Theoretical constants: perturbation moduli, gradient bounds, rollout
//! lengths, sample sizes and the sample-based convergence schedule.
//!
//! Matrix perturbations of Sigma are measured in the Frobenius norm; `|X|`
//! of a fixed matrix is its spectral norm.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{self, RiccatiSolution};
use crate::linalg;
use crate::model::{is_admissible, v_k, GaussianPolicy, SystemParams};
use crate::rpg;

/// Which expression of the K-perturbation radius h_Sigma to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HSigmaForm {
    /// Built from mu / S, never larger than the appendix form.
    #[default]
    Lemma,
    /// Built from 1 - gamma V_K.
    Appendix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundOptions {
    pub h_sigma_form: HSigmaForm,
    /// Add one to every integer output.
    pub slack: bool,
    /// Ratio bound between a sampled and the expected rollout cost.
    pub gamma_bound: f64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            h_sigma_form: HSigmaForm::Lemma,
            slack: false,
            gamma_bound: 10.0,
        }
    }
}

/// `(a - 1 - log a) / (a - 1)^2`, the curvature constant of `-log` on
/// `[a, inf)`. Continuous at a = 1 with value 1/2.
pub fn smoothness_m(a: f64) -> f64 {
    if (a - 1.0).abs() < 1e-6 {
        return 0.5 - (a - 1.0) / 3.0;
    }
    (a - 1.0 - a.ln()) / ((a - 1.0) * (a - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct BoundReport {
    /// Lower gradient-domination constant, mu / (4 |M_K|).
    pub lambda1: f64,
    /// Stated form mu / |M_K|, kept for comparison.
    pub lambda1_stated: f64,
    /// 1 / (mu sigma_min(R)).
    pub lambda2: f64,
    /// S* / (mu^2 sigma_min(R)).
    pub lambda2_appendix: f64,
    pub grad_k_bound: f64,
    pub grad_sigma_bound: f64,
    pub h_sigma: f64,
    pub h_sigma_form: HSigmaForm,
    pub g_sigma: f64,
    pub h_k: f64,
    pub h2: f64,
    pub h5: f64,
    pub h_e: f64,
    pub h6: f64,
    pub h7: f64,
    pub h8: f64,
    pub h9: f64,
    /// Stated form tau sigma_min(Sigma) / (4(1-gamma)) (not a valid modulus).
    pub h9_stated: f64,
    pub h10: f64,
    pub h11: f64,
    /// Almost-smoothness constant at `a`.
    pub m: f64,
    /// Stated form `(log a - a + 1)/(a-1)^2` (negative on (0,1)).
    pub m_stated: f64,
    /// Curvature constant used inside h11 (at a = 1/2).
    pub m_h11: f64,
    /// a = tau eta1 with the automatic eta1 at this policy.
    pub a: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub phi: Option<f64>,
    pub n_rpg: Option<f64>,
    pub n_sb: Option<f64>,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub eps3: Option<f64>,
    pub kappa1: Option<f64>,
    pub kappa2: Option<f64>,
    pub kappa3: Option<f64>,
    /// Assumption constants of the sampling lemmas.
    pub gamma_bound: Option<f64>,
    pub l_bound: Option<f64>,
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    pub range1: Option<f64>,
    pub range2: Option<f64>,
    /// Samples, rollout length and radius for the K-gradient estimate.
    pub m_k: Option<f64>,
    pub l_k: Option<f64>,
    pub r1: Option<f64>,
    /// Same for the Sigma-gradient estimate.
    pub m_sigma: Option<f64>,
    pub l_sigma: Option<f64>,
    pub r2: Option<f64>,
    /// Same for the S estimate; `m_s_stated` is the stated square-root rule.
    pub m_s: Option<f64>,
    pub m_s_stated: Option<f64>,
    pub l_s: Option<f64>,
    pub r3: Option<f64>,
}

/// `K^T Bt - A B` as a vector.
fn drift_vec(params: &SystemParams, k: &DVector<f64>) -> DVector<f64> {
    params.noise_coupling() * k - &params.b * params.a
}

/// K-perturbation radius h_Sigma.
pub fn h_sigma(params: &SystemParams, k: &DVector<f64>, sigma: &DMatrix<f64>, form: HSigmaForm) -> Result<f64> {
    let bt = linalg::spectral_norm(&params.noise_coupling());
    let w = drift_vec(params, k).norm();
    let c = match form {
        HSigmaForm::Lemma => params.mu() / eval::s_k_sigma(params, k, sigma)?,
        HSigmaForm::Appendix => {
            eval::p_k(params, k)?;
            1.0 - params.gamma * v_k(params, k)
        }
    };
    let c2 = c * c;
    Ok(0.5 * c2 / ((0.5 * c2 * bt + w * w).sqrt() + w))
}

/// Largest r such that every gain within distance r of `k` keeps
/// gamma V < 1.
pub fn gain_margin(params: &SystemParams, k: &DVector<f64>) -> f64 {
    let bt = linalg::spectral_norm(&params.noise_coupling());
    let w = drift_vec(params, k).norm();
    let slack = 1.0 / params.gamma - v_k(params, k);
    if slack <= 0.0 {
        return 0.0;
    }
    if bt == 0.0 {
        return if w == 0.0 { f64::INFINITY } else { slack / (2.0 * w) };
    }
    // bt r^2 + 2 w r = slack
    (-w + (w * w + bt * slack).sqrt()) / bt
}

/// Product where a zero factor kills an infinite radius.
fn mul0(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

fn ceil_slack(x: f64, slack: bool) -> f64 {
    let c = x.ceil().max(1.0);
    if slack {
        c + 1.0
    } else {
        c
    }
}

/// Every perturbation constant at (K, Sigma).
pub fn perturbation_report(
    params: &SystemParams,
    policy: &GaussianPolicy,
    solution: &RiccatiSolution,
    opts: &BoundOptions,
) -> Result<BoundReport> {
    if !is_admissible(params, policy) {
        return Err(Error::InvalidParams("policy is not admissible".into()));
    }
    let (k, sigma) = (&policy.k, &policy.sigma);
    let g = params.gamma;
    let mu = params.mu();
    let tau = params.tau;
    let bt_mat = params.noise_coupling();
    let bt = linalg::spectral_norm(&bt_mat);
    let r_norm = params.r_norm();
    let r_min = params.r_sigma_min();
    let k_norm = k.norm();
    let one_minus_gv = 1.0 - g * v_k(params, k);

    let p = eval::p_k(params, k)?;
    let m_mat = eval::m_k(params, k)?;
    let m_norm = linalg::spectral_norm(&m_mat);
    let f = eval::cost_f(params, k, sigma)?;
    let s = eval::s_k_sigma(params, k, sigma)?;
    let gap = (f - solution.f_star).abs();
    let sig_min = linalg::min_eigenvalue(sigma);
    let sig_norm = linalg::spectral_norm(sigma);

    let lambda1 = mu / (4.0 * m_norm);
    let lambda1_stated = mu / m_norm;
    let lambda2 = 1.0 / (mu * r_min);
    let lambda2_appendix = solution.s_star / (mu * mu * r_min);
    let e_bound = (gap / lambda1).sqrt();
    // S <= (f - psi/(1-gamma)) / Q; the psi term only matters when psi < 0.
    let psi = eval::psi(params, sigma)?;
    let grad_k_bound = (f + (-psi).max(0.0) / (1.0 - g)) / params.q * e_bound;
    let grad_sigma_bound = (m_norm + tau / (2.0 * sig_min)) / (1.0 - g);

    let hs = h_sigma(params, k, sigma, opts.h_sigma_form)?;
    let w = drift_vec(params, k).norm();
    let h2 = g * bt_mat.trace() / ((1.0 - g) * one_minus_gv);
    let g_sigma = 2.0 / (one_minus_gv * one_minus_gv) * (2.0 * w + mul0(bt, hs));
    let inflow = (sigma * &bt_mat).trace();
    let h_k = 2.0 * g_sigma * ((1.0 - g) * mu + g * inflow) / (1.0 - g);
    let h5 = 3.0 * k_norm * r_norm / one_minus_gv + (params.q + 4.0 * r_norm * k_norm * k_norm) * g_sigma;
    let h_e = 2.0 * (r_norm + g * params.a.abs() * h5 * params.b.norm() + g * p * bt + 2.0 * g * h5 * bt * k_norm);
    let s_majorant = s + mul0(h_k, hs) + h2 * sig_norm;
    let h6 = h_k * e_bound + h_e * s_majorant;
    let h7 = h2 * e_bound;
    let h8 = mul0(g * bt / (1.0 - g), h5);
    let h9 = tau / ((1.0 - g) * sig_min * sig_min);
    let h9_stated = tau * sig_min / (4.0 * (1.0 - g));
    let h10 = (2.0 * g * sig_norm * bt / (1.0 - g) + mu) * h5;
    let sig_inv = linalg::spd_inverse(sigma).ok_or(Error::DegenerateCovariance)?;
    let m_h11 = smoothness_m(0.5);
    let h11 = m_h11 * sig_inv.norm() / 2.0 + grad_sigma_bound;

    let steps = rpg::auto_step_sizes(params, policy)?;
    let a = tau * steps.eta1;
    let m_stated = (a.ln() - a + 1.0) / ((a - 1.0) * (a - 1.0));
    let phi = rpg::contraction_phi(params, solution, steps.eta1, steps.eta2).ok();

    Ok(BoundReport {
        lambda1,
        lambda1_stated,
        lambda2,
        lambda2_appendix,
        grad_k_bound,
        grad_sigma_bound,
        h_sigma: hs,
        h_sigma_form: opts.h_sigma_form,
        g_sigma,
        h_k,
        h2,
        h5,
        h_e,
        h6,
        h7,
        h8,
        h9,
        h9_stated,
        h10,
        h11,
        m: smoothness_m(a),
        m_stated,
        m_h11,
        a,
        eta1: steps.eta1,
        eta2: steps.eta2,
        phi,
        ..Default::default()
    })
}

/// Rollout lengths `(l_for_S, l_for_f)` from the displayed rule
/// `l >= (log eps - log S) / log gamma` and its cost analogue. These only
/// account for the discount; when V_K > 1 the second moment grows and the
/// tails can exceed `eps` (see [`rollout_length`]).
pub fn rollout_length_stated(
    params: &SystemParams,
    policy: &GaussianPolicy,
    epsilon: f64,
    slack: bool,
) -> Result<(usize, usize)> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParams("epsilon must be positive".into()));
    }
    let (k, sigma) = (&policy.k, &policy.sigma);
    let s = eval::s_k_sigma(params, k, sigma)?;
    let psi = eval::psi(params, sigma)?;
    let lg = params.gamma.ln();
    let bracket = (params.q + k.dot(&(&params.r * k))) * s + psi / (1.0 - params.gamma);
    let l_s = (epsilon.ln() - s.ln()) / lg;
    let l_f = if bracket > 0.0 { (epsilon.ln() - bracket.ln()) / lg } else { 1.0 };
    Ok((ceil_slack(l_s, slack) as usize, ceil_slack(l_f, slack) as usize))
}

/// Exact tail `S - S^(l) = gamma^l S(m_l)`, where `m_l` is the second moment
/// after l steps and `S(m)` the discounted moment sum started from `m`.
pub fn moment_tail(params: &SystemParams, policy: &GaussianPolicy, l: usize) -> Result<f64> {
    eval::p_k(params, &policy.k)?;
    let g = params.gamma;
    let v = v_k(params, &policy.k);
    let c = (&policy.sigma * params.noise_coupling()).trace();
    let vl = v.powi(l as i32);
    let geo = if (v - 1.0).abs() < 1e-12 { l as f64 } else { (vl - 1.0) / (v - 1.0) };
    let m_l = vl * params.mu() + c * geo;
    let s_from = (m_l + g * c / (1.0 - g)) / (1.0 - g * v);
    Ok(g.powi(l as i32) * s_from)
}

const MAX_ROLLOUT: usize = 1 << 20;

/// Smallest `(l_for_S, l_for_f)` with `S - S^(l) <= eps` and
/// `|f - f^(l)| <= eps`, from the exact tails. The cost tail is bounded by
/// `(Q + K^T R K) (S - S^(l)) + |psi| gamma^l / (1 - gamma)`.
pub fn rollout_length(params: &SystemParams, policy: &GaussianPolicy, epsilon: f64, slack: bool) -> Result<(usize, usize)> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParams("epsilon must be positive".into()));
    }
    let k = &policy.k;
    let w = params.q + k.dot(&(&params.r * k));
    let psi = eval::psi(params, &policy.sigma)?.abs() / (1.0 - params.gamma);
    let cost_tail = |l: usize| -> Result<f64> { Ok(w * moment_tail(params, policy, l)? + psi * params.gamma.powi(l as i32)) };
    let s_tail = |l: usize| moment_tail(params, policy, l);
    let l_s = smallest_l(&s_tail, epsilon)?;
    let l_f = smallest_l(&cost_tail, epsilon)?;
    let bump = usize::from(slack);
    Ok((l_s + bump, l_f + bump))
}

/// Smallest l >= 1 with `tail(l) <= eps` for a non-increasing tail.
fn smallest_l(tail: &dyn Fn(usize) -> Result<f64>, eps: f64) -> Result<usize> {
    let mut hi = 1;
    while tail(hi)? > eps {
        hi *= 2;
        if hi > MAX_ROLLOUT {
            return Err(Error::InvalidParams("rollout length exceeds 2^20 steps".into()));
        }
    }
    let mut lo = hi / 2;
    if lo == 0 {
        return Ok(1);
    }
    // tail(lo) > eps >= tail(hi)
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if tail(mid)? > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Vector Bernstein sample size
/// `ceil((2 dim / eps^2)(sigma^2 + R eps / (3 sqrt(dim))) log(dim / kappa))`.
pub fn bernstein_sample_size(sigma_sq: f64, range: f64, epsilon: f64, kappa: f64, dim: usize) -> Result<f64> {
    if !(sigma_sq > 0.0 && range > 0.0 && epsilon > 0.0 && dim > 0) {
        return Err(Error::InvalidParams("Bernstein inputs must be positive".into()));
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidParams(format!("kappa must lie in (0,1), got {kappa}")));
    }
    let d = dim as f64;
    let n = 2.0 * d / (epsilon * epsilon) * (sigma_sq + range * epsilon / (3.0 * d.sqrt())) * (d / kappa).ln();
    Ok(n.ceil().max(1.0))
}

/// `1 - (1 - kappa)^(1/parts)`, computed without cancellation.
fn split_kappa(kappa: f64, parts: f64) -> f64 {
    -((-kappa).ln_1p() / parts).exp_m1()
}

/// Full sample-based schedule at the starting policy: N_SB, the tolerance
/// and confidence splits, and the (M, l, r) triples of the three
/// estimators.
pub fn sbrpg_schedule(
    params: &SystemParams,
    start: &GaussianPolicy,
    solution: &RiccatiSolution,
    epsilon: f64,
    kappa: f64,
    opts: &BoundOptions,
) -> Result<BoundReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParams("epsilon must be positive".into()));
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidParams(format!("kappa must lie in (0,1), got {kappa}")));
    }
    let mut rep = perturbation_report(params, start, solution, opts)?;
    let phi = rep.phi.ok_or(Error::ContractionPrecondition { phi: f64::NAN })?;
    let (k, sigma) = (&start.k, &start.sigma);
    let n = params.n();
    let nf = n as f64;
    let g = params.gamma;
    let mu = params.mu();
    let f = eval::cost_f(params, k, sigma)?;
    let s = eval::s_k_sigma(params, k, sigma)?;
    let psi = eval::psi(params, sigma)?;
    let gap0 = f - solution.f_star;
    let (eta1, eta2) = (rep.eta1, rep.eta2);

    let n_rpg = rpg::theoretical_iterations(params, solution, eta1, gap0, epsilon);
    let n_sb = n_rpg * (1.0 - phi).ln() / (1.0 - phi / 2.0).ln();
    let h1011 = rep.h10 + rep.h11;
    let sig_norm = linalg::spectral_norm(sigma);
    let eps1 = mu * phi * epsilon / (8.0 * eta1 * h1011);
    let eps2 = phi * sig_norm * epsilon / (2.0 * eta2 * h1011);
    let eps3 = mu * mu * phi * epsilon / (8.0 * eta1 * rep.grad_k_bound * h1011);
    let n_sb_int = n_sb.ceil().max(1.0);
    let kappa1 = split_kappa(kappa, 4.0 * n_sb_int);
    let kappa2 = split_kappa(kappa, 2.0 * n_sb_int);
    let kappa3 = kappa1;

    let lg = g.ln();
    let k2r = k.norm_squared() * params.r_norm();
    let gamma_b = opts.gamma_bound;
    let l_bound = params.init.bound();

    // K-gradient estimate.
    let gk = rep.grad_k_bound;
    let r1 = eps1 / (6.0 * rep.h6);
    let sigma1 = (2.0 * nf * f / r1).powi(2) + (eps1 / 6.0 + gk).powi(2);
    let range1 = 2.0 * nf * f / r1 + eps1 / 6.0 + gk;
    let sigma2 = (2.0 * gamma_b * l_bound * l_bound * f * r1).powi(2) + (eps1 / 2.0 + gk).powi(2);
    let range2 = 2.0 * gamma_b * l_bound * l_bound * f * r1 + eps1 / 2.0 + gk;
    let log_k = ((nf + 1.0) / kappa1.sqrt()).ln();
    let m_k = f64::max(
        2.0 * nf / (eps1 / 6.0).powi(2) * (sigma1 + range1 * eps1 / (18.0 * nf.sqrt())) * log_k,
        2.0 * nf / (eps1 / 3.0).powi(2) * (sigma2 + range2 * eps1 / (9.0 * nf.sqrt())) * log_k,
    );
    let l_k_den = 2.0 * f.abs() * (2.0 * k2r + 1.0 / params.q.abs())
        + psi.abs() * (1.0 + 1.0 / params.q.abs() + 1.0 / (1.0 - g));
    let l_k = ((r1 / nf * eps1 / 3.0).ln() - l_k_den.ln()) / lg;

    // Sigma-gradient estimate.
    let gs = rep.grad_sigma_bound;
    let r2 = eps2 / (2.0 * rep.h9);
    let sv = (2.0 * nf * f / r2).powi(2) + (eps2 / 2.0 + gs).powi(2);
    let range_v = 2.0 * nf * f / r2 + eps2 / 2.0 + gs;
    let sv2 = (2.0 * gamma_b * l_bound * l_bound * f * r2).powi(2) + (5.0 * eps2 / 6.0 + gs).powi(2);
    let range_v2 = 2.0 * gamma_b * l_bound * l_bound * f * r2 + 5.0 * eps2 / 6.0 + gs;
    let log_s = (nf / kappa2).ln();
    let m_sigma = f64::max(
        log_s * 4.0 / (eps2 * eps2) * (2.0 * sv + range_v * eps2 / 3.0),
        6.0 / (eps2 * eps2) * log_s * (3.0 * sv2 + range_v2 * eps2 / 3.0),
    );
    let log_det = linalg::spd_log_det(sigma).ok_or(Error::DegenerateCovariance)?;
    let ln2pi_n = nf * (2.0 * std::f64::consts::PI).ln();
    let psi2 = (sigma * &params.r).trace().abs() + params.tau / 2.0 * (nf + 2.0 * (ln2pi_n + log_det)).abs();
    let c = 1.0 + k2r / params.q.abs();
    let l_sigma_den = c * 2.0 * f + (c + 1.0 / (1.0 - g)) * psi2;
    let l_sigma = ((eps2 * r2 / (3.0 * nf)).ln() - l_sigma_den.ln()) / lg;

    let plan = s_plan_from(params, &rep, s, eps3, kappa3, opts)?;

    let sl = opts.slack;
    rep.n_rpg = Some(n_rpg);
    rep.n_sb = Some(n_sb);
    rep.eps1 = Some(eps1);
    rep.eps2 = Some(eps2);
    rep.eps3 = Some(eps3);
    rep.kappa1 = Some(kappa1);
    rep.kappa2 = Some(kappa2);
    rep.kappa3 = Some(kappa3);
    rep.gamma_bound = Some(gamma_b);
    rep.l_bound = Some(l_bound);
    rep.sigma1 = Some(sigma1);
    rep.sigma2 = Some(sigma2);
    rep.range1 = Some(range1);
    rep.range2 = Some(range2);
    rep.m_k = Some(ceil_slack(m_k, sl));
    rep.l_k = Some(ceil_slack(l_k, sl));
    rep.r1 = Some(r1);
    rep.m_sigma = Some(ceil_slack(m_sigma, sl));
    rep.l_sigma = Some(ceil_slack(l_sigma, sl));
    rep.r2 = Some(r2);
    rep.m_s = Some(plan.m);
    rep.m_s_stated = Some(plan.m_stated);
    rep.l_s = Some(plan.l as f64);
    rep.r3 = Some(plan.r3);
    Ok(rep)
}

/// Radius, rollout length and sample counts for estimating S from rollouts
/// under gain perturbations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SEstimatePlan {
    /// `min{S/(2 h_K), eps/(3 h_K), h_Sigma}`.
    pub r3: f64,
    /// `(log(eps/3) - log(3S/2)) / log gamma`.
    pub l: usize,
    /// Bernstein count from [`s_sample_size`].
    pub m: f64,
    /// Printed square-root rule `sqrt(3S/eps log(n/kappa))`.
    pub m_stated: f64,
}

pub fn s_estimate_plan(
    params: &SystemParams,
    policy: &GaussianPolicy,
    solution: &RiccatiSolution,
    eps: f64,
    kappa: f64,
    opts: &BoundOptions,
) -> Result<SEstimatePlan> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParams("epsilon must be positive".into()));
    }
    let rep = perturbation_report(params, policy, solution, opts)?;
    let s = eval::s_k_sigma(params, &policy.k, &policy.sigma)?;
    s_plan_from(params, &rep, s, eps, kappa, opts)
}

fn s_plan_from(params: &SystemParams, rep: &BoundReport, s: f64, eps: f64, kappa: f64, opts: &BoundOptions) -> Result<SEstimatePlan> {
    let nf = params.n() as f64;
    let r3 = mul_div(s, 2.0, rep.h_k).min(mul_div(eps, 3.0, rep.h_k)).min(rep.h_sigma);
    let l = ((eps / 3.0).ln() - (1.5 * s).ln()) / params.gamma.ln();
    let m_stated = (3.0 * s / eps * (nf / kappa).ln()).sqrt();
    let m = s_sample_size(s, eps, kappa, opts.gamma_bound)?;
    let sl = opts.slack;
    Ok(SEstimatePlan {
        r3,
        l: ceil_slack(l, sl) as usize,
        m: ceil_slack(m, sl),
        m_stated: ceil_slack(m_stated, sl),
    })
}

/// `x / (k h)`, infinite when `h` vanishes.
fn mul_div(x: f64, k: f64, h: f64) -> f64 {
    if h == 0.0 {
        f64::INFINITY
    } else {
        x / (k * h)
    }
}

/// Samples for |S_hat - S| <= eps/3 (the sampling share of the S error)
/// with probability 1 - kappa, from the scalar Bernstein bound with
/// per-sample range `gamma_bound * 3S/2` and variance at most
/// `range * 3S/2`.
pub fn s_sample_size(s: f64, eps: f64, kappa: f64, gamma_bound: f64) -> Result<f64> {
    let range = gamma_bound * 1.5 * s;
    bernstein_sample_size(range * 1.5 * s, range, eps / 3.0, kappa, 1)
}
