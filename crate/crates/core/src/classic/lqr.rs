use serde::{Deserialize, Serialize};

use super::riccati::{solve_dare, spectral_radius, Mat};
use super::ClassicError;
use crate::dynamics::{error_dynamics, error_state_from_frenet, ErrorModelForm, ErrorState, Mat4, VehicleParams};
use crate::env::{ControlContext, Controller, ControllerError, Sensing};
use crate::geometry::TrackPose;
use crate::scalar::Scalar;

pub const RICCATI_TOL: f64 = 1e-10;
pub const RICCATI_MAX_ITER: usize = 1_000_000;

/// Diagonal state costs on `[e1, e1_dot, e2, e2_dot]` and the steering cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqrWeights<T> {
    pub q1: T,
    pub q2: T,
    pub q3: T,
    pub q4: T,
    pub rho: T,
}

impl<T: Scalar> LqrWeights<T> {
    pub fn new(q1: T, q2: T, q3: T, q4: T, rho: T) -> Self {
        Self { q1, q2, q3, q4, rho }
    }

    pub fn validate(&self) -> Result<(), ClassicError> {
        let q = [self.q1, self.q2, self.q3, self.q4];
        if q.iter().any(|&x| !(x >= T::zero()) || !x.is_finite()) {
            return Err(ClassicError::InvalidWeights("state costs must be finite and non-negative".into()));
        }
        if q.iter().all(|&x| x == T::zero()) {
            return Err(ClassicError::InvalidWeights("at least one state cost must be positive".into()));
        }
        if !(self.rho > T::zero()) || !self.rho.is_finite() {
            return Err(ClassicError::InvalidWeights(format!("rho must be positive, got {}", self.rho)));
        }
        Ok(())
    }

    fn q_matrix(&self) -> Mat4<T> {
        let z = T::zero();
        [[self.q1, z, z, z], [z, self.q2, z, z], [z, z, self.q3, z], [z, z, z, self.q4]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrGain<T> {
    pub k: [T; 4],
    pub p: Mat4<T>,
    pub residual: T,
    pub iterations: usize,
    /// Discretized error model the gain was computed for.
    pub ad: Mat4<T>,
    pub bd: [T; 4],
}

impl LqrGain<f64> {
    /// `Ad - Bd K`.
    pub fn closed_loop(&self) -> Mat<f64, 4> {
        std::array::from_fn(|i| std::array::from_fn(|j| self.ad[i][j] - self.bd[i] * self.k[j]))
    }

    pub fn closed_loop_spectral_radius(&self) -> f64 {
        spectral_radius(&self.closed_loop())
    }
}

/// Forward-Euler discretization `(I + A dt, B dt)` of the error model.
pub fn discretize<T: Scalar>(a: &Mat4<T>, b: &[T; 4], dt: T) -> (Mat4<T>, [T; 4]) {
    let ad = std::array::from_fn(|i| std::array::from_fn(|j| if i == j { T::one() } else { T::zero() } + a[i][j] * dt));
    (ad, b.map(|x| x * dt))
}

pub fn lqr_synthesize<T: Scalar>(
    params: &VehicleParams<T>,
    vx: T,
    weights: &LqrWeights<T>,
    dt: T,
) -> Result<LqrGain<T>, ClassicError> {
    lqr_synthesize_with(params, vx, weights, dt, ErrorModelForm::default())
}

pub fn lqr_synthesize_with<T: Scalar>(
    params: &VehicleParams<T>,
    vx: T,
    weights: &LqrWeights<T>,
    dt: T,
    form: ErrorModelForm,
) -> Result<LqrGain<T>, ClassicError> {
    weights.validate()?;
    if !(dt > T::zero()) {
        return Err(ClassicError::InvalidWeights(format!("dt must be positive, got {dt}")));
    }
    let (a, b) = error_dynamics(params, vx, form)?;
    let (ad, bd) = discretize(&a, &b, dt);
    let sol = solve_dare(ad, bd, weights.q_matrix(), weights.rho, T::lit(RICCATI_TOL), RICCATI_MAX_ITER)?;
    Ok(LqrGain { k: sol.k, p: sol.p, residual: sol.residual, iterations: sol.iterations, ad, bd })
}

/// State feedback `delta = -K e`, saturated and normalized by `delta_max`.
pub fn lqr_act<T: Scalar>(gain: &LqrGain<T>, e: &ErrorState<T>, delta_max: T) -> T {
    let x = e.to_array();
    let u: T = -(0..4).map(|i| gain.k[i] * x[i]).sum::<T>();
    u.max(-delta_max).min(delta_max) / delta_max
}

/// LQR steering on the Frenet pose. Error rates are backward differences
/// of consecutive poses; the first call of an episode uses zero rates.
#[derive(Debug, Clone)]
pub struct LqrController {
    gain: LqrGain<f64>,
    sensing: Sensing,
    prev: Option<TrackPose<f64>>,
}

impl LqrController {
    pub fn new(gain: LqrGain<f64>) -> Self {
        Self { gain, sensing: Sensing::default(), prev: None }
    }

    pub fn with_sensing(self, sensing: Sensing) -> Self {
        Self { sensing, ..self }
    }

    pub fn synthesize(params: &VehicleParams<f64>, speed: f64, weights: &LqrWeights<f64>, dt: f64) -> Result<Self, ClassicError> {
        Ok(Self::new(lqr_synthesize(params, speed, weights, dt)?))
    }

    pub fn gain(&self) -> &LqrGain<f64> {
        &self.gain
    }
}

impl Controller for LqrController {
    fn act(&mut self, ctx: &ControlContext<'_>) -> Result<f64, ControllerError> {
        let pose = ctx.pose_for(self.sensing);
        let prev = self.prev.unwrap_or(pose);
        let e = error_state_from_frenet(&pose, &prev, ctx.dt);
        self.prev = Some(pose);
        Ok(lqr_act(&self.gain, &e, ctx.vehicle.delta_max))
    }

    fn reset(&mut self) {
        self.prev = None;
    }
}
