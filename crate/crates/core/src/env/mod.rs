//! Episodic lane-keeping environment at a fixed control rate.
//!
//! Each step applies a normalized steering command to the kinematic plant,
//! re-projects the vehicle onto the track, scores the new pose and returns a
//! normalized observation perturbed by Gaussian sensor noise.

mod reward;
mod score;

pub use reward::{quadratic_reward, reward, TERMINAL_PENALTY};
pub use score::{
    run_episode, score_episode, ControlContext, Controller, ControllerError, EpisodeScore, Sensing, TraceRow,
    TraceWriter, TRACE_HEADER,
};

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{body_velocity, kinematic_step, KinematicState, VehicleParams};
use crate::geometry::{GeometryError, HeadingClass, HeadingClassifier, Track, TrackPose, WorldPose};

/// Normalization constant for speeds: 75 km/h in m/s.
pub const SPEED_SCALE: f64 = 75.0 / 3.6;

/// 70 km/h.
pub const DEFAULT_SPEED: f64 = 19.44;

pub const OBS_DIM: usize = 7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("episode finished; call reset before stepping")]
    EpisodeDone,
    #[error("environment has not been reset")]
    NotReset,
    #[error("action must be finite, got {0}")]
    NonFiniteAction(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Control period, s.
    pub dt: f64,
    pub max_steps: usize,
    /// Standard deviation of the additive noise on every normalized observation component.
    pub noise_sigma: f64,
    /// Weight of the heading-sine term in the reward.
    pub lambda: f64,
    /// Constant vehicle speed, m/s.
    pub speed: f64,
    pub seed: u64,
    /// Preview distance of the heading-class feature, m.
    pub heading_lookahead: f64,
    /// Mean curvature separating curves from straights, 1/m.
    pub heading_threshold: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            max_steps: 6500,
            noise_sigma: 0.05,
            lambda: 1.0,
            speed: DEFAULT_SPEED,
            seed: 0,
            heading_lookahead: 30.0,
            heading_threshold: 0.005,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::InvalidConfig(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return bad(format!("speed must be positive, got {}", self.speed));
        }
        if !(self.heading_lookahead > 0.0) || !(self.heading_threshold >= 0.0) {
            return bad("heading lookahead must be positive and threshold non-negative".into());
        }
        Ok(())
    }

    pub fn without_noise(self) -> Self {
        Self { noise_sigma: 0.0, ..self }
    }
}

/// Normalized agent state: track features `sigma = [d, theta, left, straight, right]`
/// and vehicle features `eta = [vx, vy]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Observation {
    pub sigma: [f64; 5],
    pub eta: [f64; 2],
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        let [a, b, c, d, e] = self.sigma;
        let [f, g] = self.eta;
        [a, b, c, d, e, f, g]
    }

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        if v.len() != OBS_DIM {
            return None;
        }
        Some(Self { sigma: [v[0], v[1], v[2], v[3], v[4]], eta: [v[5], v[6]] })
    }

    pub fn d_norm(&self) -> f64 {
        self.sigma[0]
    }

    pub fn theta_norm(&self) -> f64 {
        self.sigma[1]
    }

    /// Heading class recovered from the (possibly noisy) one-hot entries by argmax.
    pub fn hard_class(&self) -> HeadingClass {
        let scores = &self.sigma[2..5];
        let mut best = 0;
        for i in 1..3 {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        HeadingClass::ALL[best]
    }
}

/// Divides each feature by its nominal maximum.
pub fn normalize_state(d: f64, theta: f64, class: HeadingClass, vx: f64, vy: f64, w: f64) -> Observation {
    let [l, s, r] = class.one_hot::<f64>();
    Observation {
        sigma: [d / w, theta / std::f64::consts::PI, l, s, r],
        eta: [vx / SPEED_SCALE, vy / SPEED_SCALE],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub step: usize,
    pub s_progress: f64,
    pub d: f64,
    pub theta: f64,
    pub raw_action: f64,
    /// The episode ended by leaving the lane or turning backward, not by the step limit.
    pub terminated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone)]
pub struct Env {
    track: Arc<Track<f64>>,
    config: EnvConfig,
    vehicle: VehicleParams<f64>,
    classifier: HeadingClassifier<f64>,
    rng: ChaCha8Rng,
    state: KinematicState<f64>,
    pose: TrackPose<f64>,
    delta: f64,
    steps: usize,
    done: bool,
    started: bool,
}

impl Env {
    pub fn new(track: Arc<Track<f64>>, config: EnvConfig, vehicle: VehicleParams<f64>) -> Result<Self, EnvError> {
        config.validate()?;
        vehicle.validate().map_err(EnvError::InvalidConfig)?;
        Ok(Self {
            track,
            classifier: HeadingClassifier { lookahead: config.heading_lookahead, threshold: config.heading_threshold },
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            vehicle,
            state: KinematicState::default(),
            pose: TrackPose::default(),
            delta: 0.0,
            steps: 0,
            done: false,
            started: false,
        })
    }

    pub fn track(&self) -> &Arc<Track<f64>> {
        &self.track
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn vehicle(&self) -> &VehicleParams<f64> {
        &self.vehicle
    }

    pub fn kinematic_state(&self) -> &KinematicState<f64> {
        &self.state
    }

    pub fn track_pose(&self) -> &TrackPose<f64> {
        &self.pose
    }

    /// Front-wheel angle applied on the last step.
    pub fn steering(&self) -> f64 {
        self.delta
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Replaces the configuration; takes effect from the next reset.
    pub fn reconfigure(&mut self, config: EnvConfig) -> Result<(), EnvError> {
        config.validate()?;
        self.config = config;
        self.classifier = HeadingClassifier { lookahead: config.heading_lookahead, threshold: config.heading_threshold };
        self.started = false;
        Ok(())
    }

    /// Starts an episode at `s = 0` on the centerline, reseeding the noise stream.
    pub fn reset(&mut self) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let start = self.track.centerline_pose(0.0);
        self.state = KinematicState { pose: start, v: self.config.speed };
        self.pose = TrackPose { s: self.track.wrap_s(0.0), d: 0.0, theta: 0.0 };
        self.delta = 0.0;
        self.steps = 0;
        self.done = false;
        self.started = true;
        self.observe()
    }

    /// Reseeds with `seed` and resets.
    pub fn reset_with_seed(&mut self, seed: u64) -> Observation {
        self.config.seed = seed;
        self.reset()
    }

    pub fn step(&mut self, action: f64) -> Result<StepResult, EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        if !action.is_finite() {
            return Err(EnvError::NonFiniteAction(action));
        }
        let a = action.clamp(-1.0, 1.0);
        self.delta = a * self.vehicle.delta_max;
        self.state = kinematic_step(&self.state, &self.vehicle, self.delta, self.config.dt);
        self.steps += 1;

        let w = self.track.half_width();
        let terminated = match self.track.world_to_track(&self.state.pose) {
            Ok(pose) => {
                self.pose = pose;
                pose.d.abs() > w || pose.theta.abs() >= std::f64::consts::FRAC_PI_2
            }
            Err(GeometryError::OutOfCorridor { distance, .. }) => {
                self.pose.d = distance.copysign(self.pose.d);
                true
            }
            Err(e) => return Err(e.into()),
        };
        let reward = if terminated {
            TERMINAL_PENALTY
        } else {
            reward(self.pose.theta, self.pose.d.abs(), w, self.config.lambda)
        };
        self.done = terminated || self.steps >= self.config.max_steps;

        Ok(StepResult {
            obs: self.observe(),
            reward,
            done: self.done,
            info: StepInfo {
                step: self.steps,
                s_progress: self.pose.s,
                d: self.pose.d,
                theta: self.pose.theta,
                raw_action: action,
                terminated,
            },
        })
    }

    /// Noise-free normalized observation of the current state.
    pub fn clean_observation(&self) -> Observation {
        let class = self.classifier.classify(&self.track, self.pose.s);
        let (vx, vy) = body_velocity(&self.state, &self.vehicle, self.delta);
        normalize_state(self.pose.d, self.pose.theta, class, vx, vy, self.track.half_width())
    }

    /// Draws one noise sample per component, in `sigma` then `eta` order.
    fn observe(&mut self) -> Observation {
        let mut obs = self.clean_observation();
        let sigma = self.config.noise_sigma;
        if sigma > 0.0 {
            for v in obs.sigma.iter_mut().chain(obs.eta.iter_mut()) {
                let n: f64 = StandardNormal.sample(&mut self.rng);
                *v += sigma * n;
            }
        }
        obs
    }

    pub fn world_pose(&self) -> WorldPose<f64> {
        self.state.pose
    }
}
