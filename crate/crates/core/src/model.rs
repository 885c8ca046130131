//! The controlled system, Gaussian feedback policies, and the Monte Carlo
//! rollout simulator.
//!
//! The state is scalar and the control is an `n`-vector:
//!
//! ```text
//! x_{t+1} = (A + w^x_t C) x_t + (B + w^u_t D) u_t,    u_t ~ N(-K x_t, Sigma)
//! ```
//!
//! with per-step cost `Q x^2 + u^T R u + tau * log pi(u | x)` discounted by
//! `gamma`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;

/// Rollouts abort once |x_t| exceeds this.
pub const DIVERGENCE_THRESHOLD: f64 = 1e15;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Law of the multiplicative noises `w^x` and `w^u` (both zero mean, unit
/// variance per coordinate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Independent Rademacher (+1/-1) coordinates.
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialStateDist {
    /// x0 = +c or -c with probability 1/2 each.
    TwoPoint { c: f64 },
    /// x0 ~ U[-half_width, half_width].
    Uniform { half_width: f64 },
    /// x0 ~ N(0, std^2).
    Gaussian { std: f64 },
}

impl Default for InitialStateDist {
    fn default() -> Self {
        InitialStateDist::TwoPoint { c: 1.0 }
    }
}

impl InitialStateDist {
    /// E[x0^2].
    pub fn mu(&self) -> f64 {
        match *self {
            InitialStateDist::TwoPoint { c } => c * c,
            InitialStateDist::Uniform { half_width } => half_width * half_width / 3.0,
            InitialStateDist::Gaussian { std } => std * std,
        }
    }

    /// Essential bound on |x0| (infinite for the Gaussian law).
    pub fn bound(&self) -> f64 {
        match *self {
            InitialStateDist::TwoPoint { c } => c.abs(),
            InitialStateDist::Uniform { half_width } => half_width.abs(),
            InitialStateDist::Gaussian { .. } => f64::INFINITY,
        }
    }

    pub fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> f64 {
        match *self {
            InitialStateDist::TwoPoint { c } => {
                if rng.random::<bool>() {
                    c
                } else {
                    -c
                }
            }
            InitialStateDist::Uniform { half_width } => rng.random_range(-half_width..=half_width),
            InitialStateDist::Gaussian { std } => std * rng.sample::<f64, _>(StandardNormal),
        }
    }
}

/// Plant, objective and initial-state law.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub a: f64,
    /// Control gain, the row vector B stored as a column.
    pub b: DVector<f64>,
    pub c: f64,
    pub d: DMatrix<f64>,
    pub q: f64,
    pub r: DMatrix<f64>,
    pub gamma: f64,
    pub tau: f64,
    pub init: InitialStateDist,
    pub noise: NoiseKind,
}

impl SystemParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: f64,
        b: DVector<f64>,
        c: f64,
        d: DMatrix<f64>,
        q: f64,
        r: DMatrix<f64>,
        gamma: f64,
        tau: f64,
        init: InitialStateDist,
    ) -> Result<Self> {
        let params = SystemParams {
            a,
            b,
            c,
            d,
            q,
            r,
            gamma,
            tau,
            init,
            noise: NoiseKind::Gaussian,
        };
        params.validate()?;
        Ok(params)
    }

    /// The experiment of the reference study: scalar state, three controls.
    pub fn reference_experiment() -> Self {
        let d = DMatrix::from_row_slice(
            3,
            3,
            &[0.05, 0.13, 0.12, 0.13, 0.07, 0.10, 0.12, 0.10, 0.03],
        );
        SystemParams::new(
            0.7,
            DVector::from_vec(vec![0.1, 0.2, 0.3]),
            0.03,
            d,
            0.5,
            DMatrix::identity(3, 3),
            0.5,
            0.1,
            InitialStateDist::default(),
        )
        .expect("reference parameters are valid")
    }

    pub fn with_noise(mut self, noise: NoiseKind) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_init(mut self, init: InitialStateDist) -> Self {
        self.init = init;
        self
    }

    /// Control dimension.
    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn mu(&self) -> f64 {
        self.init.mu()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.b.len();
        if n == 0 {
            return Err(Error::InvalidParams("control dimension must be at least 1".into()));
        }
        if self.d.nrows() != n || self.d.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "D",
                expected: n,
                got: self.d.nrows().max(self.d.ncols()),
            });
        }
        if self.r.nrows() != n || self.r.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "R",
                expected: n,
                got: self.r.nrows().max(self.r.ncols()),
            });
        }
        let finite = [self.a, self.c, self.q, self.gamma, self.tau]
            .iter()
            .chain(self.b.iter())
            .chain(self.d.iter())
            .chain(self.r.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("non-finite entry".into()));
        }
        if self.q <= 0.0 {
            return Err(Error::InvalidParams(format!("Q must be positive, got {}", self.q)));
        }
        if !linalg::is_symmetric(&self.r) {
            return Err(Error::InvalidParams("R must be symmetric".into()));
        }
        let r_min = linalg::min_eigenvalue(&self.r);
        if r_min <= 0.0 {
            return Err(Error::InvalidParams("R must be positive definite".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParams(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau < 2.0 * r_min) {
            return Err(Error::InvalidParams(format!(
                "tau must lie in (0, 2 sigma_min(R)) = (0, {}), got {}",
                2.0 * r_min,
                self.tau
            )));
        }
        let mu = self.init.mu();
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParams("E[x0^2] must be positive".into()));
        }
        Ok(())
    }

    /// B^T B + D^T D.
    pub fn noise_coupling(&self) -> DMatrix<f64> {
        linalg::outer(&self.b) + self.d.transpose() * &self.d
    }

    pub fn r_sigma_min(&self) -> f64 {
        linalg::min_eigenvalue(&self.r)
    }

    pub fn r_norm(&self) -> f64 {
        linalg::spectral_norm(&self.r)
    }

    pub(crate) fn check_gain(&self, k: &DVector<f64>) -> Result<()> {
        if k.len() != self.n() {
            return Err(Error::DimensionMismatch {
                what: "K",
                expected: self.n(),
                got: k.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_cov(&self, sigma: &DMatrix<f64>) -> Result<()> {
        if sigma.nrows() != self.n() || sigma.ncols() != self.n() {
            return Err(Error::DimensionMismatch {
                what: "Sigma",
                expected: self.n(),
                got: sigma.nrows().max(sigma.ncols()),
            });
        }
        Ok(())
    }
}

/// pi(u | x) = N(-K x, Sigma).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub k: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl GaussianPolicy {
    pub fn new(k: DVector<f64>, sigma: DMatrix<f64>) -> Self {
        GaussianPolicy { k, sigma }
    }

    /// K = 0, Sigma = scale * I.
    pub fn isotropic(n: usize, scale: f64) -> Self {
        GaussianPolicy {
            k: DVector::zeros(n),
            sigma: DMatrix::identity(n, n) * scale,
        }
    }

    pub fn n(&self) -> usize {
        self.k.len()
    }

    /// log N(u; -K x, Sigma).
    pub fn log_pdf(&self, x: f64, u: &DVector<f64>) -> Result<f64> {
        let chol = nalgebra::Cholesky::new(linalg::symmetrize(&self.sigma)).ok_or(Error::DegenerateCovariance)?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::DegenerateCovariance);
        }
        let centered = u + &self.k * x;
        let z = chol
            .l()
            .solve_lower_triangular(&centered)
            .ok_or(Error::DegenerateCovariance)?;
        let n = self.n() as f64;
        Ok(-0.5 * (n * LN_2PI + log_det + z.norm_squared()))
    }

    /// E_u[log pi(u|x)] = -(n + log((2 pi)^n det Sigma)) / 2.
    pub fn expected_log_pdf(&self) -> Result<f64> {
        let log_det = linalg::spd_log_det(&self.sigma).ok_or(Error::DegenerateCovariance)?;
        let n = self.n() as f64;
        Ok(-0.5 * (n + n * LN_2PI + log_det))
    }
}

/// Closed-loop mean-square gain
/// `V_K = A^2 + C^2 + K^T (B^T B + D^T D) K - 2 A B K`.
pub fn v_k(params: &SystemParams, k: &DVector<f64>) -> f64 {
    let bb = params.noise_coupling();
    params.a * params.a + params.c * params.c + k.dot(&(&bb * k)) - 2.0 * params.a * params.b.dot(k)
}

/// Membership in the admissible set: gamma V_K < 1 and Sigma symmetric
/// positive definite.
pub fn is_admissible(params: &SystemParams, policy: &GaussianPolicy) -> bool {
    if policy.k.len() != params.n() || policy.sigma.nrows() != params.n() || policy.sigma.ncols() != params.n() {
        return false;
    }
    params.gamma * v_k(params, &policy.k) < 1.0 && linalg::is_positive_definite(&policy.sigma)
}

/// One step of the exact second-moment recursion
/// `E x_{t+1}^2 = V_K E x_t^2 + Tr(Sigma (B^T B + D^T D))`.
pub fn second_moment_step(params: &SystemParams, policy: &GaussianPolicy, m: f64) -> f64 {
    let inflow = (&policy.sigma * params.noise_coupling()).trace();
    v_k(params, &policy.k) * m + inflow
}

/// A simulated trajectory of `l` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// x_0 .. x_l
    pub states: Vec<f64>,
    /// u_0 .. u_{l-1}
    pub actions: Vec<DVector<f64>>,
    pub discounted_cost: f64,
    pub discounted_sq_states: f64,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Discounted sums of one rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutSummary {
    pub discounted_cost: f64,
    pub discounted_sq_states: f64,
}

/// Precomputed, allocation-free simulator for one (params, policy) pair.
///
/// Every random draw comes from the caller's generator in a fixed order
/// (x0; then per step: the n policy normals, w^x, the n entries of w^u), so
/// a rollout is a pure function of the generator state.
#[derive(Debug, Clone)]
pub struct Simulator {
    n: usize,
    a: f64,
    c: f64,
    q: f64,
    gamma: f64,
    tau: f64,
    b: Vec<f64>,
    k: Vec<f64>,
    /// Row-major lower Cholesky factor of Sigma.
    chol: Vec<f64>,
    /// Row-major D.
    d: Vec<f64>,
    /// Row-major R.
    r: Vec<f64>,
    log_norm: f64,
    init: InitialStateDist,
    noise: NoiseKind,
}

impl Simulator {
    pub fn new(params: &SystemParams, policy: &GaussianPolicy) -> Result<Self> {
        params.check_gain(&policy.k)?;
        params.check_cov(&policy.sigma)?;
        let n = params.n();
        if !linalg::is_symmetric(&policy.sigma) {
            return Err(Error::DegenerateCovariance);
        }
        let chol = nalgebra::Cholesky::new(policy.sigma.clone()).ok_or(Error::DegenerateCovariance)?;
        let l = chol.l();
        let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::DegenerateCovariance);
        }
        let row_major = |m: &DMatrix<f64>| -> Vec<f64> {
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect()
        };
        Ok(Simulator {
            n,
            a: params.a,
            c: params.c,
            q: params.q,
            gamma: params.gamma,
            tau: params.tau,
            b: params.b.iter().copied().collect(),
            k: policy.k.iter().copied().collect(),
            chol: row_major(&l),
            d: row_major(&params.d),
            r: row_major(&params.r),
            log_norm: -0.5 * (n as f64 * LN_2PI + log_det),
            init: params.init,
            noise: params.noise,
        })
    }

    /// Same simulator with the feedback gain replaced (no refactorization).
    pub fn with_gain(&self, k: &DVector<f64>) -> Self {
        let mut s = self.clone();
        s.k.clear();
        s.k.extend(k.iter().copied());
        s
    }

    #[inline]
    fn noise<G: Rng + ?Sized>(&self, rng: &mut G) -> f64 {
        match self.noise {
            NoiseKind::Gaussian => rng.sample(StandardNormal),
            NoiseKind::Bounded => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// Simulates `l` steps; `record` receives `(x_t, u_t)` for every step
    /// and finally `x_l` with an empty action slice.
    fn run<G, F>(&self, l: usize, rng: &mut G, mut record: F) -> Result<RolloutSummary>
    where
        G: Rng + ?Sized,
        F: FnMut(f64, &[f64]),
    {
        let n = self.n;
        let mut z = vec![0.0; n];
        let mut u = vec![0.0; n];
        let mut du = vec![0.0; n];
        let mut x = self.init.sample(rng);
        let mut disc = 1.0;
        let mut cost = 0.0;
        let mut sq = 0.0;
        for t in 0..l {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            let mut zz = 0.0;
            for i in 0..n {
                let row = &self.chol[i * n..i * n + i + 1];
                let eps: f64 = row.iter().zip(&z[..=i]).map(|(a, b)| a * b).sum();
                u[i] = -self.k[i] * x + eps;
                zz += z[i] * z[i];
            }
            let mut uru = 0.0;
            for i in 0..n {
                let ri = &self.r[i * n..(i + 1) * n];
                let s: f64 = ri.iter().zip(&u).map(|(a, b)| a * b).sum();
                uru += u[i] * s;
                let di = &self.d[i * n..(i + 1) * n];
                du[i] = di.iter().zip(&u).map(|(a, b)| a * b).sum();
            }
            let log_pi = self.log_norm - 0.5 * zz;
            cost += disc * (self.q * x * x + uru + self.tau * log_pi);
            sq += disc * x * x;
            record(x, &u);

            let wx = self.noise(rng);
            let mut next = (self.a + wx * self.c) * x;
            for (bi, ui) in self.b.iter().zip(u.iter()) {
                next += bi * ui;
            }
            for dui in du.iter() {
                let wu = self.noise(rng);
                next += wu * dui;
            }
            if !next.is_finite() || next.abs() > DIVERGENCE_THRESHOLD {
                return Err(Error::TrajectoryDiverged { step: t + 1 });
            }
            x = next;
            disc *= self.gamma;
        }
        record(x, &[]);
        Ok(RolloutSummary {
            discounted_cost: cost,
            discounted_sq_states: sq,
        })
    }

    /// Discounted cost and discounted squared-state sum of one rollout.
    pub fn summary<G: Rng + ?Sized>(&self, l: usize, rng: &mut G) -> Result<RolloutSummary> {
        self.run(l, rng, |_, _| {})
    }
}

/// Simulates `l` steps of the system under `policy`, seeded by `seed`.
pub fn sample_rollout(params: &SystemParams, policy: &GaussianPolicy, l: usize, seed: u64) -> Result<Trajectory> {
    if l == 0 {
        return Err(Error::InvalidParams("rollout length must be at least 1".into()));
    }
    let sim = Simulator::new(params, policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(l + 1);
    let mut actions = Vec::with_capacity(l);
    let summary = sim.run(l, &mut rng, |x, u| {
        states.push(x);
        if !u.is_empty() {
            actions.push(DVector::from_column_slice(u));
        }
    })?;
    Ok(Trajectory {
        states,
        actions,
        discounted_cost: summary.discounted_cost,
        discounted_sq_states: summary.discounted_sq_states,
        seed,
    })
}
