//! JSON experiment configuration.
//!
//! Every section is optional; omitted fields take the reference experiment
//! values. Unknown keys are rejected and errors carry the key path.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use erlq::bounds::{BoundOptions, HSigmaForm};
use erlq::{
    CoefficientMode, CostSource, GaussianPolicy, InitialStateDist, NoiseKind, RpgConfig, SbrpgConfig, StepSize,
    SystemParams,
};

use crate::error::CliError;

/// Seed used when neither the command line, the config nor `ERLQ_SEED`
/// provide one.
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub system: SystemSection,
    /// Starting policy for `rpg`, `sbrpg` and `bounds`; evaluated policy
    /// for `eval`.
    pub policy: PolicySection,
    pub solver: SolverSection,
    pub rpg: RpgSection,
    pub sbrpg: SbrpgSection,
    pub bounds: BoundsSection,
    pub gradcheck: GradcheckSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitSection {
    TwoPoint { c: f64 },
    Uniform { half_width: f64 },
    Gaussian { std: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseSection {
    Gaussian,
    Bounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub a: f64,
    pub b: Vec<f64>,
    pub c: f64,
    /// Row-major n x n.
    pub d: Vec<Vec<f64>>,
    pub q: f64,
    /// Row-major n x n, symmetric positive definite.
    pub r: Vec<Vec<f64>>,
    pub gamma: f64,
    pub tau: f64,
    pub init: InitSection,
    pub noise: NoiseSection,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl Default for SystemSection {
    fn default() -> Self {
        let p = SystemParams::reference_experiment();
        let init = match p.init {
            InitialStateDist::TwoPoint { c } => InitSection::TwoPoint { c },
            InitialStateDist::Uniform { half_width } => InitSection::Uniform { half_width },
            InitialStateDist::Gaussian { std } => InitSection::Gaussian { std },
        };
        SystemSection {
            a: p.a,
            b: p.b.iter().copied().collect(),
            c: p.c,
            d: rows(&p.d),
            q: p.q,
            r: rows(&p.r),
            gamma: p.gamma,
            tau: p.tau,
            init,
            noise: NoiseSection::Gaussian,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub k: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

impl Default for PolicySection {
    fn default() -> Self {
        let p = GaussianPolicy::isotropic(3, 0.5);
        PolicySection {
            k: p.k.iter().copied().collect(),
            sigma: rows(&p.sigma),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub are_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            are_tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

/// `"auto"` or a positive number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSection {
    Auto(AutoTag),
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AutoTag {
    Auto,
}

impl From<StepSection> for StepSize {
    fn from(s: StepSection) -> Self {
        match s {
            StepSection::Auto(_) => StepSize::Auto,
            StepSection::Fixed(v) => StepSize::Fixed(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpgSection {
    pub eta1: StepSection,
    pub eta2: StepSection,
    pub epsilon: f64,
    pub max_iter: usize,
    pub record_every: usize,
    pub recompute_steps: bool,
}

impl Default for RpgSection {
    fn default() -> Self {
        let d = RpgConfig::default();
        RpgSection {
            eta1: StepSection::Auto(AutoTag::Auto),
            eta2: StepSection::Auto(AutoTag::Auto),
            epsilon: d.epsilon,
            max_iter: d.max_iter,
            record_every: d.record_every,
            recompute_steps: d.recompute_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientSection {
    AmbientDim,
    PaperN,
}

impl From<CoefficientSection> for CoefficientMode {
    fn from(c: CoefficientSection) -> Self {
        match c {
            CoefficientSection::AmbientDim => CoefficientMode::AmbientDim,
            CoefficientSection::PaperN => CoefficientMode::PaperN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostSourceSection {
    Rollout,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbrpgSection {
    pub m: usize,
    pub l: usize,
    pub r1: f64,
    pub r2: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub n_iter: usize,
    pub coefficient_mode: CoefficientSection,
    pub cost_source: CostSourceSection,
    pub max_redraws: usize,
    pub oracle_eval: bool,
    pub record_every: usize,
}

impl Default for SbrpgSection {
    fn default() -> Self {
        let d = SbrpgConfig::default();
        SbrpgSection {
            m: d.m,
            l: d.l,
            r1: d.r1,
            r2: d.r2,
            eta1: d.eta1,
            eta2: d.eta2,
            n_iter: d.n_iter,
            coefficient_mode: CoefficientSection::AmbientDim,
            cost_source: CostSourceSection::Rollout,
            max_redraws: d.max_redraws,
            oracle_eval: d.oracle_eval,
            record_every: d.record_every,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HSigmaSection {
    Lemma,
    Appendix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    /// Target accuracy of the convergence schedule.
    pub epsilon: f64,
    /// Failure probability of the convergence schedule.
    pub kappa: f64,
    pub h_sigma_form: HSigmaSection,
    /// Assumed ratio bound on per-rollout moment sums.
    pub gamma_bound: f64,
    pub slack: bool,
}

impl Default for BoundsSection {
    fn default() -> Self {
        BoundsSection {
            epsilon: 1e-3,
            kappa: 0.05,
            h_sigma_form: HSigmaSection::Lemma,
            gamma_bound: BoundOptions::default().gamma_bound,
            slack: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub policies: usize,
    pub h: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        GradcheckSection { policies: 100, h: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub csv: bool,
    pub svg: bool,
    /// Keep every k-th history row in CSV and plots (the last row is always kept).
    pub record_every: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            csv: true,
            svg: true,
            record_every: 1,
        }
    }
}

/// Parses a config, reporting the key path of the first offending field.
pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

fn matrix(what: &str, m: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>, CliError> {
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(CliError::Config(format!("at `{what}`: expected a {n} x {n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| m[i][j]))
}

impl ExperimentConfig {
    /// Checks everything that can be checked without running anything.
    pub fn validate(&self) -> Result<(), CliError> {
        let p = self.system_params()?;
        let pol = self.policy()?;
        if pol.n() != p.n() {
            return Err(CliError::Config(format!(
                "at `policy.k`: length {} does not match system dimension {}",
                pol.n(),
                p.n()
            )));
        }
        self.rpg_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.sbrpg_config(0).validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.solver.are_tol > 0.0) || self.solver.max_iter == 0 {
            return Err(CliError::Config("at `solver`: are_tol and max_iter must be positive".into()));
        }
        if !(self.bounds.epsilon > 0.0) || !(self.bounds.kappa > 0.0 && self.bounds.kappa < 1.0) {
            return Err(CliError::Config("at `bounds`: need epsilon > 0 and kappa in (0,1)".into()));
        }
        if !(self.bounds.gamma_bound > 0.0) {
            return Err(CliError::Config("at `bounds.gamma_bound`: must be positive".into()));
        }
        if self.gradcheck.policies == 0 || !(self.gradcheck.h > 0.0) {
            return Err(CliError::Config("at `gradcheck`: need policies >= 1 and h > 0".into()));
        }
        if self.output.record_every == 0 {
            return Err(CliError::Config("at `output.record_every`: must be at least 1".into()));
        }
        Ok(())
    }

    pub fn system_params(&self) -> Result<SystemParams, CliError> {
        let s = &self.system;
        let n = s.b.len();
        if n == 0 {
            return Err(CliError::Config("at `system.b`: must not be empty".into()));
        }
        let init = match s.init {
            InitSection::TwoPoint { c } => InitialStateDist::TwoPoint { c },
            InitSection::Uniform { half_width } => InitialStateDist::Uniform { half_width },
            InitSection::Gaussian { std } => InitialStateDist::Gaussian { std },
        };
        let p = SystemParams::new(
            s.a,
            DVector::from_vec(s.b.clone()),
            s.c,
            matrix("system.d", &s.d, n)?,
            s.q,
            matrix("system.r", &s.r, n)?,
            s.gamma,
            s.tau,
            init,
        )
        .map_err(|e| CliError::Config(format!("at `system`: {e}")))?;
        Ok(p.with_noise(match s.noise {
            NoiseSection::Gaussian => NoiseKind::Gaussian,
            NoiseSection::Bounded => NoiseKind::Bounded,
        }))
    }

    pub fn policy(&self) -> Result<GaussianPolicy, CliError> {
        let n = self.policy.k.len();
        let sigma = matrix("policy.sigma", &self.policy.sigma, n)?;
        Ok(GaussianPolicy::new(DVector::from_vec(self.policy.k.clone()), sigma))
    }

    pub fn rpg_config(&self) -> RpgConfig {
        let r = &self.rpg;
        RpgConfig {
            eta1: r.eta1.into(),
            eta2: r.eta2.into(),
            epsilon: r.epsilon,
            max_iter: r.max_iter,
            record_every: r.record_every,
            recompute_steps: r.recompute_steps,
            are_tol: self.solver.are_tol,
            are_max_iter: self.solver.max_iter,
        }
    }

    pub fn sbrpg_config(&self, seed: u64) -> SbrpgConfig {
        let s = &self.sbrpg;
        SbrpgConfig {
            m: s.m,
            l: s.l,
            r1: s.r1,
            r2: s.r2,
            eta1: s.eta1,
            eta2: s.eta2,
            n_iter: s.n_iter,
            seed,
            coefficient_mode: s.coefficient_mode.into(),
            cost_source: match s.cost_source {
                CostSourceSection::Rollout => CostSource::Rollout,
                CostSourceSection::Exact => CostSource::Exact,
            },
            max_redraws: s.max_redraws,
            oracle_eval: s.oracle_eval,
            record_every: s.record_every,
        }
    }

    pub fn bound_options(&self) -> BoundOptions {
        BoundOptions {
            h_sigma_form: match self.bounds.h_sigma_form {
                HSigmaSection::Lemma => HSigmaForm::Lemma,
                HSigmaSection::Appendix => HSigmaForm::Appendix,
            },
            slack: self.bounds.slack,
            gamma_bound: self.bounds.gamma_bound,
        }
    }

    /// Seed precedence: command line, then config, then `ERLQ_SEED`, then
    /// [`DEFAULT_SEED`].
    pub fn resolve_seed(&self, flag: Option<u64>, env: Option<&str>) -> Result<u64, CliError> {
        if let Some(s) = flag.or(self.seed) {
            return Ok(s);
        }
        match env {
            Some(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("ERLQ_SEED is not a 64-bit unsigned integer: {v:?}"))),
            None => Ok(DEFAULT_SEED),
        }
    }

    /// Canonical JSON, the input of the config hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`canonical_json`](Self::canonical_json).
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_reference_experiment() {
        let cfg = parse("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.system_params().unwrap(), SystemParams::reference_experiment());
    }

    #[test]
    fn unknown_key_reports_its_path() {
        let err = parse(r#"{"sbrpg": {"m": 10, "eta": 0.1}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sbrpg.eta"), "{msg}");
    }

    #[test]
    fn wrong_type_reports_its_path() {
        let err = parse(r#"{"system": {"d": [[1, 2, "x"]]}}"#).unwrap_err();
        assert!(err.to_string().contains("system.d"), "{err}");
    }

    #[test]
    fn step_size_accepts_auto_or_number() {
        let cfg = parse(r#"{"rpg": {"eta1": "auto", "eta2": 0.01}}"#).unwrap();
        assert_eq!(cfg.rpg_config().eta1, StepSize::Auto);
        assert_eq!(cfg.rpg_config().eta2, StepSize::Fixed(0.01));
        assert!(parse(r#"{"rpg": {"eta1": "fast"}}"#).is_err());
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let err = parse(r#"{"policy": {"k": [0, 0], "sigma": [[1, 0], [0, 1]]}}"#).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn seed_precedence() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.resolve_seed(None, Some("9")).unwrap(), 9);
        cfg.seed = Some(4);
        assert_eq!(cfg.resolve_seed(None, Some("9")).unwrap(), 4);
        assert_eq!(cfg.resolve_seed(Some(7), Some("9")).unwrap(), 7);
        cfg.seed = None;
        assert_eq!(cfg.resolve_seed(None, None).unwrap(), DEFAULT_SEED);
        assert!(cfg.resolve_seed(None, Some("x")).is_err());
    }

    #[test]
    fn canonical_json_round_trips() {
        let mut cfg = ExperimentConfig { seed: Some(12), ..Default::default() };
        cfg.sbrpg.r1 = 0.1 + 0.2;
        let back = parse(&cfg.canonical_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }
}
