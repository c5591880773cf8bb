//! Model-based baseline controllers: LQR on the lateral error model and
//! kinematic MPC.

mod lqr;
mod mpc;
mod presets;
pub mod riccati;

pub use lqr::{
    discretize, lqr_act, lqr_synthesize, lqr_synthesize_with, LqrController, LqrGain, LqrWeights, RICCATI_MAX_ITER,
    RICCATI_TOL,
};
pub use mpc::{
    local_anchor, mpc_reference, mpc_solve, reference_at, shift_warm_start, to_local, MpcConfig, MpcController, MpcSolution, RefPoint,
};
pub use presets::{bundled_presets_toml, find_preset, parse_presets, presets, ControllerPreset};

use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::geometry::GeometryError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassicError {
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("riccati iteration did not converge in {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid mpc setup: {0}")]
    InvalidMpc(String),
    #[error("preset: {0}")]
    Preset(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
