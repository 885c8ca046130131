//! Entropy-regularized discounted linear-quadratic control with
//! multiplicative noise.
//!
//! * [`model`]: plant, Gaussian policies and the rollout simulator.
//! * [`eval`]: closed-form cost, gradients and the Riccati baseline.
//! * [`rpg`]: exact regularized policy gradient.
//! * [`sbrpg`]: sample-based policy gradient from zeroth-order estimates.
//! * [`bounds`]: theoretical constants, radii and sample-size schedules.

// `!(x > 0.0)` is used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod bounds;
pub mod error;
pub mod eval;
pub mod history;
pub mod inequalities;
pub mod linalg;
pub mod model;
pub mod rpg;
pub mod sampling;
pub mod sbrpg;
pub mod seed;

pub use error::{Error, Result};
pub use eval::{evaluate, solve_are, EvalReport, RiccatiSolution};
pub use history::{RunHistory, RunRecord};
pub use model::{GaussianPolicy, InitialStateDist, NoiseKind, SystemParams, Trajectory};
pub use rpg::{run_rpg, RpgConfig, StepSize};
pub use sbrpg::{run_sbrpg, CoefficientMode, CostSource, SbrpgConfig};
