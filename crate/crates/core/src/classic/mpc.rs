//! Receding-horizon steering on the kinematic bicycle, solved by single
//! shooting with projected finite-difference gradient descent.
//!
//! Everything is expressed in a local frame anchored at the vehicle's
//! projection onto the centerline, with x along the centerline tangent.

use serde::{Deserialize, Serialize};

use super::ClassicError;
use crate::dynamics::{kinematic_step, KinematicState, VehicleParams};
use crate::env::{ControlContext, Controller, ControllerError, Sensing};
use crate::geometry::{Track, TrackPose, WorldPose};
use crate::scalar::{wrap_angle, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig<T> {
    /// Prediction horizon `Hp`: number of predicted outputs, one more than the number of actions.
    pub horizon: usize,
    /// Weights on the lateral and heading output errors.
    pub q_weights: [T; 2],
    pub r_weight: T,
    /// Front-wheel angle bounds, rad.
    pub delta_bounds: [T; 2],
    pub dt: T,
    pub iterations: usize,
    pub step_size: T,
    /// Stop once an accepted iterate lowers the cost by less than this.
    pub tol: T,
}

impl<T: Scalar> Default for MpcConfig<T> {
    fn default() -> Self {
        let d = T::lit(0.35);
        Self {
            horizon: 10,
            q_weights: [T::one(), T::one()],
            r_weight: T::one(),
            delta_bounds: [-d, d],
            dt: T::lit(0.05),
            iterations: 200,
            step_size: T::lit(0.05),
            tol: T::lit(1e-8),
        }
    }
}

impl<T: Scalar> MpcConfig<T> {
    pub fn with_horizon(self, horizon: usize) -> Self {
        Self { horizon, ..self }
    }

    pub fn validate(&self) -> Result<(), ClassicError> {
        let bad = |m: &str| Err(ClassicError::InvalidMpc(m.to_string()));
        if self.horizon < 1 {
            return bad("horizon must be at least 1");
        }
        if !(self.delta_bounds[0] < self.delta_bounds[1]) {
            return bad("delta bounds must satisfy min < max");
        }
        if self.iterations < 1 {
            return bad("iterations must be at least 1");
        }
        if !(self.dt > T::zero()) || !(self.step_size > T::zero()) || !(self.tol >= T::zero()) {
            return bad("dt and step size must be positive, tol non-negative");
        }
        if self.q_weights.iter().any(|&q| !(q >= T::zero())) || !(self.r_weight >= T::zero()) {
            return bad("weights must be non-negative");
        }
        Ok(())
    }

    pub fn actions_len(&self) -> usize {
        self.horizon - 1
    }

    fn project(&self, u: T) -> T {
        u.max(self.delta_bounds[0]).min(self.delta_bounds[1])
    }
}

/// Reference output `[y_ref, psi_ref]` in the local frame.
pub type RefPoint<T> = (T, T);

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution<T> {
    pub actions: Vec<T>,
    pub predicted_cost: T,
    pub converged: bool,
    pub iterations: usize,
    /// Cost after every accepted iterate, starting with the initial guess.
    pub cost_history: Vec<T>,
}

/// Expresses `pose` in the frame whose origin and x axis are `anchor`'s position and heading.
pub fn to_local<T: Scalar>(anchor: &WorldPose<T>, pose: &WorldPose<T>) -> WorldPose<T> {
    let (s, c) = anchor.psi.sin_cos();
    let dx = pose.x - anchor.x;
    let dy = pose.y - anchor.y;
    WorldPose { x: c * dx + s * dy, y: -s * dx + c * dy, psi: wrap_angle(pose.psi - anchor.psi) }
}

/// Centerline pose at the projection of `pose`.
pub fn local_anchor<T: Scalar>(track: &Track<T>, pose: &WorldPose<T>) -> Result<WorldPose<T>, ClassicError> {
    let proj = track.world_to_track(pose)?;
    Ok(track.centerline_pose(proj.s))
}

/// Centerline samples at arc-length spacing `v dt` starting from the projection of `pose`.
pub fn mpc_reference<T: Scalar>(
    track: &Track<T>,
    pose: &WorldPose<T>,
    v: T,
    config: &MpcConfig<T>,
) -> Result<Vec<RefPoint<T>>, ClassicError> {
    let s0 = track.world_to_track(pose)?.s;
    Ok(reference_at(track, s0, v, config))
}

/// Same as [`mpc_reference`] for a vehicle whose projection is already known.
pub fn reference_at<T: Scalar>(track: &Track<T>, s0: T, v: T, config: &MpcConfig<T>) -> Vec<RefPoint<T>> {
    let anchor = track.centerline_pose(s0);
    let ds = v * config.dt;
    (0..config.horizon)
        .map(|i| {
            let p = to_local(&anchor, &track.centerline_pose(s0 + ds * T::lit(i as f64)));
            (p.y, p.psi)
        })
        .collect()
}

fn rollout_cost<T: Scalar>(
    start: &KinematicState<T>,
    reference: &[RefPoint<T>],
    actions: &[T],
    params: &VehicleParams<T>,
    config: &MpcConfig<T>,
) -> T {
    let [qy, qpsi] = config.q_weights;
    let out = |s: &KinematicState<T>, r: &RefPoint<T>| {
        let ey = s.pose.y - r.0;
        let epsi = wrap_angle(s.pose.psi - r.1);
        qy * ey * ey + qpsi * epsi * epsi
    };
    let mut state = *start;
    let mut cost = out(&state, &reference[0]);
    for (u, r) in actions.iter().zip(&reference[1..]) {
        state = kinematic_step(&state, params, *u, config.dt);
        cost += out(&state, r) + config.r_weight * *u * *u;
    }
    cost
}

/// Minimizes the tracking-plus-steering cost over the action sequence.
///
/// `state` is in the local frame of `reference`. `warm_start`, when given and of the
/// right length, seeds the iteration.
pub fn mpc_solve<T: Scalar>(
    state: &KinematicState<T>,
    reference: &[RefPoint<T>],
    params: &VehicleParams<T>,
    config: &MpcConfig<T>,
    warm_start: Option<&[T]>,
) -> Result<MpcSolution<T>, ClassicError> {
    config.validate()?;
    if reference.len() != config.horizon {
        return Err(ClassicError::InvalidMpc(format!(
            "reference has {} points for horizon {}",
            reference.len(),
            config.horizon
        )));
    }
    let n = config.actions_len();
    let mut u: Vec<T> = match warm_start {
        Some(w) if w.len() == n => w.iter().map(|&x| config.project(x)).collect(),
        _ => vec![T::zero(); n],
    };
    let cost_of = |u: &[T]| rollout_cost(state, reference, u, params, config);
    let mut cost = cost_of(&u);
    let mut history = vec![cost];
    if n == 0 {
        return Ok(MpcSolution { actions: u, predicted_cost: cost, converged: true, iterations: 0, cost_history: history });
    }

    let h = T::epsilon().cbrt();
    let mut grad = vec![T::zero(); n];
    let mut probe = u.clone();
    let mut cand = vec![T::zero(); n];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.iterations {
        iterations += 1;
        for i in 0..n {
            let base = u[i];
            probe[i] = base + h;
            let up = cost_of(&probe);
            probe[i] = base - h;
            let down = cost_of(&probe);
            probe[i] = base;
            grad[i] = (up - down) / (T::two() * h);
        }
        let mut step = config.step_size;
        let accepted = loop {
            for i in 0..n {
                cand[i] = config.project(u[i] - step * grad[i]);
            }
            let c = cost_of(&cand);
            if c <= cost {
                break Some(c);
            }
            step = step / T::two();
            if step < T::epsilon() * config.step_size {
                break None;
            }
        };
        let Some(c) = accepted else {
            converged = true;
            break;
        };
        let decrease = cost - c;
        u.copy_from_slice(&cand);
        probe.copy_from_slice(&cand);
        cost = c;
        history.push(c);
        if decrease < config.tol {
            converged = true;
            break;
        }
    }
    Ok(MpcSolution { actions: u, predicted_cost: cost, converged, iterations, cost_history: history })
}

/// Previous solution advanced one step, with its last action repeated.
pub fn shift_warm_start<T: Scalar>(actions: &[T]) -> Vec<T> {
    match actions.split_first() {
        None => Vec::new(),
        Some((_, rest)) => {
            let mut w = rest.to_vec();
            w.push(*actions.last().expect("non-empty"));
            w
        }
    }
}

/// Receding-horizon controller holding the warm start between calls.
#[derive(Debug, Clone)]
pub struct MpcController {
    config: MpcConfig<f64>,
    sensing: Sensing,
    warm: Option<Vec<f64>>,
    last: Option<MpcSolution<f64>>,
}

impl MpcController {
    pub fn new(config: MpcConfig<f64>) -> Result<Self, ClassicError> {
        config.validate()?;
        Ok(Self { config, sensing: Sensing::default(), warm: None, last: None })
    }

    pub fn with_sensing(self, sensing: Sensing) -> Self {
        Self { sensing, ..self }
    }

    pub fn config(&self) -> &MpcConfig<f64> {
        &self.config
    }

    pub fn last_solution(&self) -> Option<&MpcSolution<f64>> {
        self.last.as_ref()
    }

    /// Solves from a world-frame state and returns the normalized first action.
    pub fn mpc_act(
        &mut self,
        track: &Track<f64>,
        state: &KinematicState<f64>,
        params: &VehicleParams<f64>,
    ) -> Result<f64, ClassicError> {
        let pose = track.world_to_track(&state.pose)?;
        self.act_from_frenet(track, &pose, state.v, params)
    }

    /// Solves from a Frenet pose; in the anchor frame the vehicle sits at `(0, d)` with heading `theta`.
    pub fn act_from_frenet(
        &mut self,
        track: &Track<f64>,
        pose: &TrackPose<f64>,
        v: f64,
        params: &VehicleParams<f64>,
    ) -> Result<f64, ClassicError> {
        let reference = reference_at(track, pose.s, v, &self.config);
        let local = KinematicState { pose: WorldPose { x: 0.0, y: pose.d, psi: pose.theta }, v };
        let sol = mpc_solve(&local, &reference, params, &self.config, self.warm.as_deref())?;
        let first = sol.actions.first().copied().unwrap_or(0.0);
        self.warm = Some(shift_warm_start(&sol.actions));
        self.last = Some(sol);
        Ok((first / params.delta_max).clamp(-1.0, 1.0))
    }
}

impl Controller for MpcController {
    fn act(&mut self, ctx: &ControlContext<'_>) -> Result<f64, ControllerError> {
        let pose = ctx.pose_for(self.sensing);
        self.act_from_frenet(ctx.track, &pose, ctx.state.v, ctx.vehicle).map_err(|e| ControllerError::Failed(e.to_string()))
    }

    fn reset(&mut self) {
        self.warm = None;
        self.last = None;
    }
}
