use std::io::{self, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Env, EnvConfig, EnvError, Observation};
use crate::dynamics::{body_velocity, KinematicState, VehicleParams};
use crate::geometry::{Track, TrackPose};

pub const TRACE_HEADER: &str = "step,t,s,d,theta,action,delta,reward,vx,vy";

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("controller failed: {0}")]
    Failed(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Everything a controller may look at before choosing an action.
///
/// `obs` is what the sensors report. `pose` and `state` are exact and are
/// there for controllers configured to bypass sensing.
#[derive(Debug, Clone, Copy)]
pub struct ControlContext<'a> {
    pub obs: &'a Observation,
    pub pose: &'a TrackPose<f64>,
    pub state: &'a KinematicState<f64>,
    pub track: &'a Track<f64>,
    pub vehicle: &'a VehicleParams<f64>,
    pub step: usize,
    pub dt: f64,
}

impl ControlContext<'_> {
    /// Frenet pose as the sensors report it: true progress, observed offset and heading.
    pub fn measured_pose(&self) -> TrackPose<f64> {
        TrackPose {
            s: self.pose.s,
            d: self.obs.d_norm() * self.track.half_width(),
            theta: self.obs.theta_norm() * std::f64::consts::PI,
        }
    }

    pub fn pose_for(&self, sensing: Sensing) -> TrackPose<f64> {
        match sensing {
            Sensing::Measured => self.measured_pose(),
            Sensing::Truth => *self.pose,
        }
    }
}

/// Where a model-based controller reads the lateral offset and heading error from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sensing {
    /// The observation, including its noise.
    #[default]
    Measured,
    /// The simulator's exact state.
    Truth,
}

pub trait Controller {
    /// Normalized steering command; values outside [-1, 1] are clamped by the environment.
    fn act(&mut self, ctx: &ControlContext<'_>) -> Result<f64, ControllerError>;

    /// Clears per-episode memory.
    fn reset(&mut self) {}
}

impl<C: Controller + ?Sized> Controller for Box<C> {
    fn act(&mut self, ctx: &ControlContext<'_>) -> Result<f64, ControllerError> {
        (**self).act(ctx)
    }

    fn reset(&mut self) {
        (**self).reset()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub t: f64,
    pub s: f64,
    pub d: f64,
    pub theta: f64,
    pub action: f64,
    pub delta: f64,
    pub reward: f64,
    pub vx: f64,
    pub vy: f64,
}

/// CSV writer for per-step traces. Floats use the shortest round-trip form, so output is
/// byte-stable for a given trajectory.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{TRACE_HEADER}")?;
        Ok(Self { out })
    }

    pub fn write_row(&mut self, r: &TraceRow) -> io::Result<()> {
        writeln!(
            self.out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.step, r.t, r.s, r.d, r.theta, r.action, r.delta, r.reward, r.vx, r.vy
        )
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeScore {
    /// Undiscounted sum of per-step rewards.
    pub total: f64,
    pub steps: usize,
    pub terminated_early: bool,
    pub mean_abs_d: f64,
    pub max_abs_d: f64,
    rewards: Vec<f64>,
}

impl EpisodeScore {
    pub fn mean_reward(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.total / self.steps as f64
        }
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn discounted(&self, gamma: f64) -> f64 {
        self.rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
    }
}

/// Resets `env`, then drives it with `controller` until the episode ends.
/// `on_step` sees every step's trace row.
pub fn run_episode<C: Controller + ?Sized>(
    env: &mut Env,
    controller: &mut C,
    mut on_step: impl FnMut(&TraceRow) -> io::Result<()>,
) -> Result<EpisodeScore, ControllerError> {
    controller.reset();
    let mut obs = env.reset();
    let dt = env.config().dt;
    let mut score =
        EpisodeScore { total: 0.0, steps: 0, terminated_early: false, mean_abs_d: 0.0, max_abs_d: 0.0, rewards: Vec::new() };
    let mut sum_abs_d = 0.0;
    while !env.is_done() {
        let action = {
            let ctx = ControlContext {
                obs: &obs,
                pose: env.track_pose(),
                state: env.kinematic_state(),
                track: env.track(),
                vehicle: env.vehicle(),
                step: env.steps(),
                dt,
            };
            controller.act(&ctx)?
        };
        let res = env.step(action)?;
        let (vx, vy) = body_velocity(env.kinematic_state(), env.vehicle(), env.steering());
        let row = TraceRow {
            step: res.info.step,
            t: res.info.step as f64 * dt,
            s: res.info.s_progress,
            d: res.info.d,
            theta: res.info.theta,
            action: res.info.raw_action,
            delta: env.steering(),
            reward: res.reward,
            vx,
            vy,
        };
        on_step(&row).map_err(|e| ControllerError::Failed(format!("trace output: {e}")))?;
        score.total += res.reward;
        score.rewards.push(res.reward);
        score.steps += 1;
        sum_abs_d += res.info.d.abs();
        score.max_abs_d = score.max_abs_d.max(res.info.d.abs());
        score.terminated_early = res.info.terminated;
        obs = res.obs;
    }
    if score.steps > 0 {
        score.mean_abs_d = sum_abs_d / score.steps as f64;
    }
    Ok(score)
}

/// Runs one episode of `controller` on a fresh environment.
pub fn score_episode<C: Controller + ?Sized>(
    controller: &mut C,
    track: Arc<Track<f64>>,
    config: EnvConfig,
    vehicle: VehicleParams<f64>,
) -> Result<EpisodeScore, ControllerError> {
    let mut env = Env::new(track, config, vehicle)?;
    run_episode(&mut env, controller, |_| Ok(()))
}
