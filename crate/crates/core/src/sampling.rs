//! Random admissible policies, used by audits and property tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::{v_k, GaussianPolicy, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySampler {
    /// Gain coordinates are drawn from U[-k_range, k_range].
    pub k_range: f64,
    /// Gains with gamma V_K above this are redrawn.
    pub max_gamma_v: f64,
    /// Eigenvalues of Sigma are drawn from U[eig_lo, eig_hi].
    pub eig_lo: f64,
    pub eig_hi: f64,
}

impl Default for PolicySampler {
    fn default() -> Self {
        PolicySampler {
            k_range: 1.0,
            max_gamma_v: 0.95,
            eig_lo: 0.05,
            eig_hi: 2.0,
        }
    }
}

/// Random orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal<G: Rng + ?Sized>(n: usize, rng: &mut G) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Symmetric matrix with the given eigenvalues and a random eigenbasis.
pub fn random_spd<G: Rng + ?Sized>(eigs: &[f64], rng: &mut G) -> DMatrix<f64> {
    let n = eigs.len();
    let q = random_orthogonal(n, rng);
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(eigs));
    let s = &q * d * q.transpose();
    crate::linalg::symmetrize(&s)
}

impl PolicySampler {
    pub fn sample_k<G: Rng + ?Sized>(&self, params: &SystemParams, rng: &mut G) -> DVector<f64> {
        loop {
            let k = DVector::from_fn(params.n(), |_, _| rng.random_range(-self.k_range..=self.k_range));
            if params.gamma * v_k(params, &k) < self.max_gamma_v {
                return k;
            }
        }
    }

    pub fn sample_sigma<G: Rng + ?Sized>(&self, n: usize, rng: &mut G) -> DMatrix<f64> {
        let eigs: Vec<f64> = (0..n).map(|_| rng.random_range(self.eig_lo..=self.eig_hi)).collect();
        random_spd(&eigs, rng)
    }

    pub fn sample<G: Rng + ?Sized>(&self, params: &SystemParams, rng: &mut G) -> GaussianPolicy {
        let k = self.sample_k(params, rng);
        GaussianPolicy::new(k, self.sample_sigma(params.n(), rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::model::is_admissible;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_are_admissible_with_requested_spectrum() {
        let p = SystemParams::reference_experiment();
        let s = PolicySampler::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let pol = s.sample(&p, &mut rng);
            assert!(is_admissible(&p, &pol));
            let ev = linalg::sym_eigenvalues(&pol.sigma);
            assert!(ev[0] >= s.eig_lo - 1e-12 && ev[2] <= s.eig_hi + 1e-12);
        }
    }
}
