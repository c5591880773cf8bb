//! Vehicle models: the nonlinear kinematic bicycle used as the simulation
//! plant and MPC predictor, and the linear lateral error model used for LQR
//! design.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{TrackPose, WorldPose};
use crate::scalar::{wrap_angle, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("error dynamics need a positive longitudinal speed, got {0} m/s")]
    SingularSpeed(f64),
}

/// Chassis and tyre parameters. Defaults are the TORCS car1-trb1 values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams<T> {
    /// Front cornering stiffness, N/rad.
    pub cf: T,
    /// Rear cornering stiffness, N/rad.
    pub cr: T,
    /// CG to front axle, m.
    pub lf: T,
    /// CG to rear axle, m.
    pub lr: T,
    pub mass: T,
    /// Yaw inertia, kg m^2.
    pub iz: T,
    /// Steering lock at the front wheel, rad.
    pub delta_max: T,
}

impl<T: Scalar> Default for VehicleParams<T> {
    fn default() -> Self {
        Self {
            cf: T::lit(80_000.0),
            cr: T::lit(80_000.0),
            lf: T::lit(1.27),
            lr: T::lit(1.37),
            mass: T::lit(1150.0),
            iz: T::lit(2000.0),
            delta_max: T::lit(0.35),
        }
    }
}

impl<T: Scalar> VehicleParams<T> {
    pub fn wheelbase(&self) -> T {
        self.lf + self.lr
    }

    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("cf", self.cf),
            ("cr", self.cr),
            ("lf", self.lf),
            ("lr", self.lr),
            ("mass", self.mass),
            ("iz", self.iz),
            ("delta_max", self.delta_max),
        ];
        for (name, v) in fields {
            if !(v > T::zero() && v.is_finite()) {
                return Err(format!("vehicle parameter {name} must be positive, got {v}"));
            }
        }
        if self.delta_max > T::FRAC_PI_4() {
            return Err(format!("delta_max {} exceeds pi/4", self.delta_max));
        }
        Ok(())
    }

    /// Slip angle at the CG for front-wheel angle `delta`.
    pub fn slip_angle(&self, delta: T) -> T {
        (self.lr / self.wheelbase() * delta.tan()).atan()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KinematicState<T> {
    pub pose: WorldPose<T>,
    /// Speed along the velocity vector, m/s.
    pub v: T,
}

/// Tracking-error state `[e1, e1_dot, e2, e2_dot]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorState<T> {
    pub e1: T,
    pub e1_dot: T,
    pub e2: T,
    pub e2_dot: T,
}

impl<T: Scalar> ErrorState<T> {
    pub fn to_array(&self) -> [T; 4] {
        [self.e1, self.e1_dot, self.e2, self.e2_dot]
    }
}

/// Which form of the error-model matrices to build.
///
/// `Reference` is the standard lateral error model (the yaw-rate coupling
/// `-vx` in `A[1][3]` and a damping `A[3][3] = -(2 Cf lf^2 + 2 Cr lr^2)/(Iz vx)`).
/// `Alternate` omits the `-vx` term and uses `(-2 Cf lf^2 + 2 Cr lr^2)` in
/// `A[3][3]`; with those entries the synthesized gain chatters against the
/// kinematic plant, so it is kept only for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorModelForm {
    #[default]
    Reference,
    Alternate,
}

pub type Mat4<T> = [[T; 4]; 4];

/// Continuous-time lateral error dynamics `x' = A x + B delta` at speed `vx`.
pub fn error_dynamics<T: Scalar>(
    params: &VehicleParams<T>,
    vx: T,
    form: ErrorModelForm,
) -> Result<(Mat4<T>, [T; 4]), DynamicsError> {
    if !(vx > T::zero()) {
        return Err(DynamicsError::SingularSpeed(vx.to_f64_lossy()));
    }
    let VehicleParams { cf, cr, lf, lr, mass: m, iz, .. } = *params;
    let two = T::two();
    let z = T::zero();
    let o = T::one();

    let a22 = -(two * cf + two * cr) / (m * vx);
    let a23 = (two * cf + two * cr) / m;
    let lateral_moment = -two * cf * lf + two * cr * lr;
    let a24 = match form {
        ErrorModelForm::Reference => lateral_moment / (m * vx) - vx,
        ErrorModelForm::Alternate => lateral_moment / (m * vx),
    };
    let a42 = lateral_moment / (iz * vx);
    let a43 = (two * cf * lf - two * cr * lr) / iz;
    let a44 = match form {
        ErrorModelForm::Reference => -(two * cf * lf * lf + two * cr * lr * lr) / (iz * vx),
        ErrorModelForm::Alternate => (-two * cf * lf * lf + two * cr * lr * lr) / (iz * vx),
    };

    let a = [[z, o, z, z], [z, a22, a23, a24], [z, z, z, o], [z, a42, a43, a44]];
    let b = [z, two * cf / m, z, two * cf * lf / iz];
    Ok((a, b))
}

/// One forward-Euler step of the constant-speed kinematic bicycle.
pub fn kinematic_step<T: Scalar>(
    state: &KinematicState<T>,
    params: &VehicleParams<T>,
    delta: T,
    dt: T,
) -> KinematicState<T> {
    let beta = params.slip_angle(delta);
    let WorldPose { x, y, psi } = state.pose;
    let v = state.v;
    let course = psi + beta;
    let yaw_rate = v * beta.cos() / params.wheelbase() * delta.tan();
    KinematicState {
        pose: WorldPose { x: x + v * course.cos() * dt, y: y + v * course.sin() * dt, psi: wrap_angle(psi + yaw_rate * dt) },
        v,
    }
}

/// Body-frame velocity `(vx, vy)` for front-wheel angle `delta`.
pub fn body_velocity<T: Scalar>(state: &KinematicState<T>, params: &VehicleParams<T>, delta: T) -> (T, T) {
    let beta = params.slip_angle(delta);
    (state.v * beta.cos(), state.v * beta.sin())
}

pub fn lateral_velocity<T: Scalar>(state: &KinematicState<T>, params: &VehicleParams<T>, delta: T) -> T {
    body_velocity(state, params, delta).1
}

/// Tracking errors from two consecutive Frenet poses; rates by backward difference.
pub fn error_state_from_frenet<T: Scalar>(current: &TrackPose<T>, previous: &TrackPose<T>, dt: T) -> ErrorState<T> {
    ErrorState {
        e1: current.d,
        e1_dot: (current.d - previous.d) / dt,
        e2: current.theta,
        e2_dot: wrap_angle(current.theta - previous.theta) / dt,
    }
}
