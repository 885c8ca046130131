//! Closed-form policy evaluation and the Riccati value-iteration baseline.
//!
//! Notation used throughout:
//!
//! ```text
//! Bt   = B^T B + D^T D
//! M_K  = R + gamma P_K Bt
//! psi  = Tr(Sigma R) - tau/2 (n + log((2 pi)^n det Sigma))   (expected per-step
//!        control + entropy cost, independent of the state)
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{v_k, GaussianPolicy, SystemParams};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// ARE iterates above this are treated as divergence.
pub const ARE_DIVERGENCE: f64 = 1e12;

fn check_gain(params: &SystemParams, k: &DVector<f64>) -> Result<f64> {
    params.check_gain(k)?;
    let v = v_k(params, k);
    let gv = params.gamma * v;
    if !(gv < 1.0) || !gv.is_finite() {
        return Err(Error::InadmissibleGain { gamma_v: gv });
    }
    Ok(v)
}

fn check_sigma(params: &SystemParams, sigma: &DMatrix<f64>) -> Result<()> {
    params.check_cov(sigma)?;
    if !linalg::is_positive_definite(sigma) {
        return Err(Error::DegenerateCovariance);
    }
    Ok(())
}

/// P_K = (Q + K^T R K) / (1 - gamma V_K).
pub fn p_k(params: &SystemParams, k: &DVector<f64>) -> Result<f64> {
    let v = check_gain(params, k)?;
    Ok((params.q + k.dot(&(&params.r * k))) / (1.0 - params.gamma * v))
}

/// M_K = R + gamma P_K (B^T B + D^T D).
pub fn m_k(params: &SystemParams, k: &DVector<f64>) -> Result<DMatrix<f64>> {
    let p = p_k(params, k)?;
    Ok(m_from_p(params, p))
}

pub(crate) fn m_from_p(params: &SystemParams, p: f64) -> DMatrix<f64> {
    &params.r + params.noise_coupling() * (params.gamma * p)
}

/// Tr(Sigma R) - tau/2 (n + log((2 pi)^n det Sigma)).
pub fn psi(params: &SystemParams, sigma: &DMatrix<f64>) -> Result<f64> {
    check_sigma(params, sigma)?;
    let log_det = linalg::spd_log_det(sigma).ok_or(Error::DegenerateCovariance)?;
    let n = params.n() as f64;
    Ok((sigma * &params.r).trace() - 0.5 * params.tau * (n + n * LN_2PI + log_det))
}

/// q_{K,Sigma} = [Tr(Sigma M_K) - tau/2 (n + log((2 pi)^n det Sigma))] / (1 - gamma).
pub fn q_k_sigma(params: &SystemParams, k: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let m = m_k(params, k)?;
    check_sigma(params, sigma)?;
    let log_det = linalg::spd_log_det(sigma).ok_or(Error::DegenerateCovariance)?;
    let n = params.n() as f64;
    Ok(((sigma * m).trace() - 0.5 * params.tau * (n + n * LN_2PI + log_det)) / (1.0 - params.gamma))
}

/// f(K, Sigma) = P_K mu + q_{K,Sigma}.
pub fn cost_f(params: &SystemParams, k: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    Ok(p_k(params, k)? * params.mu() + q_k_sigma(params, k, sigma)?)
}

/// S_{K,Sigma} = sum_t gamma^t E x_t^2, in the form
/// [(1-gamma) mu + gamma Tr(Sigma Bt)] / [(1-gamma)(1-gamma V_K)], which has
/// no singularity at V_K = 1.
pub fn s_k_sigma(params: &SystemParams, k: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let v = check_gain(params, k)?;
    params.check_cov(sigma)?;
    let g = params.gamma;
    let inflow = (sigma * params.noise_coupling()).trace();
    Ok(((1.0 - g) * params.mu() + g * inflow) / ((1.0 - g) * (1.0 - g * v)))
}

/// E_K = 2 R K + 2 gamma P_K (Bt K - A B^T).
pub fn e_k(params: &SystemParams, k: &DVector<f64>) -> Result<DVector<f64>> {
    let p = p_k(params, k)?;
    let bt = params.noise_coupling();
    Ok(&params.r * k * 2.0 + (bt * k - &params.b * params.a) * (2.0 * params.gamma * p))
}

/// grad_K f = E_K S_{K,Sigma}.
pub fn grad_k(params: &SystemParams, k: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(e_k(params, k)? * s_k_sigma(params, k, sigma)?)
}

/// grad_Sigma f = (M_K - tau/2 Sigma^{-1}) / (1 - gamma), symmetrized.
pub fn grad_sigma(params: &SystemParams, k: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = m_k(params, k)?;
    check_sigma(params, sigma)?;
    let inv = linalg::spd_inverse(sigma).ok_or(Error::DegenerateCovariance)?;
    let g = (m - inv * (0.5 * params.tau)) / (1.0 - params.gamma);
    Ok(linalg::symmetrize(&g))
}

/// S^{(l)} = sum_{t<l} gamma^t E x_t^2, propagated with the exact
/// second-moment recursion.
pub fn truncated_s(params: &SystemParams, k: &DVector<f64>, sigma: &DMatrix<f64>, l: usize) -> Result<f64> {
    let v = check_gain(params, k)?;
    params.check_cov(sigma)?;
    if l == 0 {
        return Err(Error::InvalidParams("truncation length must be at least 1".into()));
    }
    let inflow = (sigma * params.noise_coupling()).trace();
    let mut m = params.mu();
    let mut disc = 1.0;
    let mut s = 0.0;
    for _ in 0..l {
        s += disc * m;
        m = v * m + inflow;
        disc *= params.gamma;
    }
    Ok(s)
}

/// f^{(l)}: expected discounted cost of the first l steps,
/// (Q + K^T R K) S^{(l)} + psi (1 - gamma^l)/(1 - gamma).
pub fn truncated_cost(params: &SystemParams, k: &DVector<f64>, sigma: &DMatrix<f64>, l: usize) -> Result<f64> {
    let s = truncated_s(params, k, sigma, l)?;
    let ps = psi(params, sigma)?;
    let g = params.gamma;
    let geo = (1.0 - g.powi(l.min(i32::MAX as usize) as i32)) / (1.0 - g);
    Ok((params.q + k.dot(&(&params.r * k))) * s + ps * geo)
}

/// Lower bound f >= mu P_K + tau n/(2(1-gamma)) log(sigma_min(R)/(pi tau)),
/// or None when the logarithm is negative or undefined.
pub fn cost_lower_bound(params: &SystemParams, k: &DVector<f64>) -> Result<Option<f64>> {
    let p = p_k(params, k)?;
    let r_min = params.r_sigma_min();
    let pt = std::f64::consts::PI * params.tau;
    if r_min <= pt {
        return Ok(None);
    }
    let n = params.n() as f64;
    Ok(Some(
        params.mu() * p + params.tau * n / (2.0 * (1.0 - params.gamma)) * (r_min / pt).ln(),
    ))
}

/// Every closed-form quantity of one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub v_k: f64,
    pub p_k: f64,
    pub q: f64,
    pub f: f64,
    pub s: f64,
    pub e_k: DVector<f64>,
    pub grad_k: DVector<f64>,
    pub grad_sigma: DMatrix<f64>,
}

pub fn evaluate(params: &SystemParams, policy: &GaussianPolicy) -> Result<EvalReport> {
    let (k, sigma) = (&policy.k, &policy.sigma);
    let p = p_k(params, k)?;
    let q = q_k_sigma(params, k, sigma)?;
    let s = s_k_sigma(params, k, sigma)?;
    let e = e_k(params, k)?;
    Ok(EvalReport {
        v_k: v_k(params, k),
        p_k: p,
        q,
        f: p * params.mu() + q,
        s,
        grad_k: &e * s,
        e_k: e,
        grad_sigma: grad_sigma(params, k, sigma)?,
    })
}

/// Central finite differences of `cost_f` in K and along the symmetric
/// basis directions of Sigma.
///
/// Off-diagonal Sigma entries are perturbed symmetrically (both (i,j) and
/// (j,i)), so the directional derivative is twice the (i,j) gradient entry
/// and is halved accordingly.
pub fn finite_difference_grads(
    params: &SystemParams,
    k: &DVector<f64>,
    sigma: &DMatrix<f64>,
    h: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = params.n();
    let mut gk = DVector::zeros(n);
    for i in 0..n {
        let mut kp = k.clone();
        let mut km = k.clone();
        kp[i] += h;
        km[i] -= h;
        gk[i] = (cost_f(params, &kp, sigma)? - cost_f(params, &km, sigma)?) / (2.0 * h);
    }
    let mut gs = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut sp = sigma.clone();
            let mut sm = sigma.clone();
            sp[(i, j)] += h;
            sm[(i, j)] -= h;
            if i != j {
                sp[(j, i)] += h;
                sm[(j, i)] -= h;
            }
            let d = (cost_f(params, k, &sp)? - cost_f(params, k, &sm)?) / (2.0 * h);
            let v = if i == j { d } else { d / 2.0 };
            gs[(i, j)] = v;
            gs[(j, i)] = v;
        }
    }
    Ok((gk, gs))
}

/// Output of the ARE value iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub p_star: f64,
    pub q_star: f64,
    pub k_star: DVector<f64>,
    pub sigma_star: DMatrix<f64>,
    pub f_star: f64,
    /// S_{K*,Sigma*}.
    pub s_star: f64,
    pub iterations: usize,
    /// |P - T(P)| at the returned P.
    pub residual: f64,
}

impl RiccatiSolution {
    pub fn policy(&self) -> GaussianPolicy {
        GaussianPolicy::new(self.k_star.clone(), self.sigma_star.clone())
    }
}

/// One application of the Riccati map
/// T(P) = Q + gamma P (A^2 + C^2) - (gamma A P)^2 B (R + gamma P Bt)^{-1} B^T.
pub fn riccati_map(params: &SystemParams, p: f64) -> Option<f64> {
    let m = m_from_p(params, p);
    let minv_b = nalgebra::Cholesky::new(m)?.solve(&params.b);
    let gap = params.gamma * params.a * p;
    Some(params.q + params.gamma * p * (params.a * params.a + params.c * params.c) - gap * gap * params.b.dot(&minv_b))
}

/// Value iteration on the scalar ARE from P_0 = Q.
pub fn solve_are(params: &SystemParams, tol: f64, max_iter: usize) -> Result<RiccatiSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParams(format!("tolerance must be positive, got {tol}")));
    }
    params.validate()?;
    let fail = |iterations: usize, reason: &str| Error::AreFailed {
        iterations,
        reason: reason.to_string(),
    };
    let mut p = params.q;
    let mut iterations = 0;
    loop {
        if iterations >= max_iter {
            return Err(fail(iterations, "no convergence within the iteration limit"));
        }
        let next = riccati_map(params, p).ok_or_else(|| fail(iterations, "R + gamma P Bt lost definiteness"))?;
        iterations += 1;
        if !next.is_finite() || next.abs() > ARE_DIVERGENCE {
            return Err(fail(iterations, "iterates diverged"));
        }
        let step = (next - p).abs();
        p = next;
        if step < tol {
            break;
        }
    }
    let residual = (riccati_map(params, p).ok_or_else(|| fail(iterations, "R + gamma P Bt lost definiteness"))? - p).abs();

    let m = m_from_p(params, p);
    let minv = linalg::spd_inverse(&m).ok_or_else(|| fail(iterations, "R + gamma P Bt lost definiteness"))?;
    let k_star = &minv * &params.b * (params.gamma * params.a * p);
    let sigma_star = minv * (0.5 * params.tau);
    let policy = GaussianPolicy::new(k_star.clone(), sigma_star.clone());
    if !crate::model::is_admissible(params, &policy) {
        return Err(Error::SolvedPolicyOutsideOmega);
    }
    let q_star = q_k_sigma(params, &k_star, &sigma_star)?;
    let s_star = s_k_sigma(params, &k_star, &sigma_star)?;
    Ok(RiccatiSolution {
        p_star: p,
        q_star,
        f_star: p * params.mu() + q_star,
        s_star,
        k_star,
        sigma_star,
        iterations,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InitialStateDist;
    use approx::assert_relative_eq;

    fn reference() -> SystemParams {
        SystemParams::reference_experiment()
    }

    fn one_dim(a: f64, b: f64, c: f64, d: f64, gamma: f64, tau: f64) -> SystemParams {
        SystemParams::new(
            a,
            DVector::from_vec(vec![b]),
            c,
            DMatrix::from_element(1, 1, d),
            1.0,
            DMatrix::identity(1, 1),
            gamma,
            tau,
            InitialStateDist::default(),
        )
        .unwrap()
    }

    #[test]
    fn p_k_matches_fixed_point_iteration() {
        let p = reference();
        let k = DVector::zeros(3);
        let mut it = p.q;
        for _ in 0..200 {
            it = p.q + p.gamma * it * v_k(&p, &k);
        }
        let closed = p_k(&p, &k).unwrap();
        assert_relative_eq!(closed, it, epsilon = 1e-12);
        assert_relative_eq!(closed, 0.5 / 0.754_55, epsilon = 1e-14);
    }

    #[test]
    fn p_k_rejects_divergent_gain() {
        let p = one_dim(2.0, 0.0, 0.0, 0.0, 0.5, 0.5);
        assert!(matches!(
            p_k(&p, &DVector::zeros(1)),
            Err(Error::InadmissibleGain { .. })
        ));
    }

    #[test]
    fn q_without_noise_coupling_ignores_k() {
        let p = one_dim(0.5, 0.0, 0.1, 0.0, 0.5, 0.5);
        let s = DMatrix::from_element(1, 1, 0.7);
        let a = q_k_sigma(&p, &DVector::from_vec(vec![0.0]), &s).unwrap();
        let b = q_k_sigma(&p, &DVector::from_vec(vec![0.9]), &s).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-15);
    }

    #[test]
    fn s_with_zero_sigma() {
        let p = reference();
        let k = DVector::from_vec(vec![0.1, 0.2, -0.3]);
        let s = s_k_sigma(&p, &k, &DMatrix::zeros(3, 3)).unwrap();
        assert_relative_eq!(s, p.mu() / (1.0 - p.gamma * v_k(&p, &k)), epsilon = 1e-15);
    }

    #[test]
    fn truncated_s_first_term_is_mu() {
        let p = reference();
        let pol = GaussianPolicy::isotropic(3, 1.0);
        assert_eq!(truncated_s(&p, &pol.k, &pol.sigma, 1).unwrap(), p.mu());
    }

    #[test]
    fn reference_values_at_identity_covariance() {
        let p = reference();
        let pol = GaussianPolicy::isotropic(3, 1.0);
        let r = evaluate(&p, &pol).unwrap();
        assert_relative_eq!(r.f, 5.964_288_593_018_685_5, epsilon = 1e-12);
        assert_relative_eq!(r.s, 1.631_303_425_882_976_6, epsilon = 1e-12);
        assert!(r.p_k >= p.q);
    }

    #[test]
    fn e_k_vanishes_without_drift() {
        let p = one_dim(0.0, 0.4, 0.1, 0.2, 0.5, 0.5);
        assert_eq!(e_k(&p, &DVector::zeros(1)).unwrap()[0], 0.0);
    }

    #[test]
    fn grad_sigma_vanishes_at_conditional_optimum() {
        let p = reference();
        let k = DVector::from_vec(vec![0.2, -0.1, 0.05]);
        let m = m_k(&p, &k).unwrap();
        let sigma = linalg::spd_inverse(&m).unwrap() * (0.5 * p.tau);
        let g = grad_sigma(&p, &k, &sigma).unwrap();
        assert!(g.amax() < 1e-12);
    }

    #[test]
    fn are_reference_solution() {
        let p = reference();
        let sol = solve_are(&p, 1e-12, 10_000).unwrap();
        assert!(sol.residual <= 1e-12);
        assert_relative_eq!(sol.p_star, 0.653_553_511_305_092_8, epsilon = 1e-12);
        assert_relative_eq!(sol.f_star, 1.008_225_117_555_640_5, epsilon = 1e-10);
        assert_relative_eq!(sol.s_star, 1.304_528_060_830_152, epsilon = 1e-10);
        let expected_k = [0.020_802_71, 0.042_617_2, 0.064_638_07];
        for (got, want) in sol.k_star.iter().zip(expected_k) {
            assert!((got - want).abs() < 1e-7);
        }
        assert!(grad_k(&p, &sol.k_star, &sol.sigma_star).unwrap().norm() < 1e-8);
        assert!(grad_sigma(&p, &sol.k_star, &sol.sigma_star).unwrap().norm() < 1e-8);
        assert_relative_eq!(cost_f(&p, &sol.k_star, &sol.sigma_star).unwrap(), sol.f_star, epsilon = 1e-12);
    }

    #[test]
    fn are_without_drift() {
        let p = one_dim(0.0, 0.5, 0.3, 0.2, 0.6, 0.5);
        let sol = solve_are(&p, 1e-13, 10_000).unwrap();
        assert_eq!(sol.k_star[0], 0.0);
        assert_relative_eq!(sol.p_star, 1.0 / (1.0 - 0.6 * 0.09), epsilon = 1e-12);
    }

    #[test]
    fn are_reports_divergence() {
        // Uncontrollable and unstable: P grows without bound.
        let p = one_dim(3.0, 0.0, 0.0, 0.0, 0.9, 0.5);
        assert!(matches!(solve_are(&p, 1e-12, 10_000), Err(Error::AreFailed { .. })));
        let p = reference();
        assert!(matches!(solve_are(&p, 1e-12, 2), Err(Error::AreFailed { .. })));
    }
}
