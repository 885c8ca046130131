//! Per-iteration records of optimizer runs.

use nalgebra::{DMatrix, DVector};

use crate::eval::RiccatiSolution;

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub iter: usize,
    pub k: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// Exact cost of the iterate (flagged by `oracle_eval` in model-free runs).
    pub f: Option<f64>,
    /// Rollout estimate of the cost around the iterate (model-free runs only).
    pub f_estimate: Option<f64>,
    pub gap: Option<f64>,
    pub relative_gap: Option<f64>,
    pub k_err_sq: Option<f64>,
    pub sigma_err_sq: Option<f64>,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub phi: Option<f64>,
    pub s_hat: Option<f64>,
    pub grad_k_std: Option<f64>,
    pub grad_sigma_std: Option<f64>,
    pub rejected: usize,
    pub backtracks: usize,
    pub oracle_eval: bool,
}

impl RunRecord {
    pub fn new(iter: usize, k: DVector<f64>, sigma: DMatrix<f64>) -> Self {
        RunRecord {
            iter,
            k,
            sigma,
            f: None,
            f_estimate: None,
            gap: None,
            relative_gap: None,
            k_err_sq: None,
            sigma_err_sq: None,
            eta1: None,
            eta2: None,
            phi: None,
            s_hat: None,
            grad_k_std: None,
            grad_sigma_std: None,
            rejected: 0,
            backtracks: 0,
            oracle_eval: false,
        }
    }

    /// Fills the cost, gap and distance columns against the optimum.
    pub fn with_oracle(mut self, f: f64, solution: &RiccatiSolution) -> Self {
        let gap = f - solution.f_star;
        self.f = Some(f);
        self.gap = Some(gap);
        self.relative_gap = (solution.f_star > 0.0).then(|| gap / solution.f_star);
        self.k_err_sq = Some((&self.k - &solution.k_star).norm_squared());
        self.sigma_err_sq = Some((&self.sigma - &solution.sigma_star).norm_squared());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunHistory {
    pub records: Vec<RunRecord>,
    pub f_star: Option<f64>,
    /// Iteration count guaranteed by the convergence theorem, when defined.
    pub theoretical_iterations: Option<f64>,
    /// Iterations actually performed.
    pub iterations: usize,
    pub converged: bool,
    pub master_seed: Option<u64>,
}

impl RunHistory {
    pub fn last(&self) -> Option<&RunRecord> {
        self.records.last()
    }

    pub fn first(&self) -> Option<&RunRecord> {
        self.records.first()
    }

    /// Pushes a record, replacing the last one if it has the same iteration.
    pub fn push(&mut self, record: RunRecord) {
        if self.records.last().is_some_and(|r| r.iter == record.iter) {
            self.records.pop();
        }
        self.records.push(record);
    }
}
