//! Deterministic policy-gradient agent: a tanh actor, a critic that sees the
//! action from its second hidden layer on, slowly blended target copies,
//! uniform replay, and epsilon-scheduled Gaussian exploration.

mod replay;
mod train;

pub use replay::{ReplayBuffer, Transition, TransitionRef};
pub use train::{
    load_agent, save_agent, train, EpisodeLog, Manifest, PolicyController, TrainError, TrainingLog, TRAINING_LOG_HEADER,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::OBS_DIM;
use crate::nn::{Activation, AdamState, Direction, Mlp, MlpSpec, NnError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DdpgError {
    #[error("replay holds {have} transitions, need {need}")]
    InsufficientFill { have: usize, need: usize },
    #[error("state has length {got}, agent expects {expected}")]
    StateDim { expected: usize, got: usize },
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationSchedule {
    pub eps_init: f64,
    pub eps_min: f64,
    /// Steps over which epsilon decays linearly to `eps_min`.
    pub t_eps: f64,
    /// Scale on the exploration noise.
    pub beta: f64,
    /// Standard deviation of the unscaled exploration noise.
    pub sigma: f64,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        Self { eps_init: 1.0, eps_min: 0.1, t_eps: 4.0e5, beta: 1.0, sigma: 0.05 }
    }
}

impl ExplorationSchedule {
    pub fn epsilon(&self, t: u64) -> f64 {
        let decayed = self.eps_init - (self.eps_init - self.eps_min) * t as f64 / self.t_eps;
        decayed.max(self.eps_min)
    }

    pub fn validate(&self) -> Result<(), DdpgError> {
        if !(self.eps_init >= self.eps_min && self.eps_min > 0.0 && self.eps_init <= 1.0) {
            return Err(DdpgError::InvalidConfig("need 1 >= eps_init >= eps_min > 0".into()));
        }
        if !(self.t_eps > 0.0) || !(self.beta >= 0.0) || !(self.sigma >= 0.0) {
            return Err(DdpgError::InvalidConfig("t_eps must be positive, beta and sigma non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdpgConfig {
    pub state_dim: usize,
    pub hidden: [usize; 2],
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Fill level that must be reached before any update; raised to `batch_size` if smaller.
    pub warmup: usize,
    pub schedule: ExplorationSchedule,
    pub seed: u64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            state_dim: OBS_DIM,
            hidden: [64, 64],
            gamma: 0.99,
            tau: 0.001,
            lr_actor: 1e-3,
            lr_critic: 1e-4,
            batch_size: 64,
            buffer_capacity: 100_000,
            warmup: 1000,
            schedule: ExplorationSchedule::default(),
            seed: 0,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<(), DdpgError> {
        let bad = |m: &str| Err(DdpgError::InvalidConfig(m.to_string()));
        if self.state_dim == 0 || self.hidden.contains(&0) {
            return bad("dimensions must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("batch size must be positive and fit in the buffer");
        }
        self.schedule.validate()
    }

    pub fn effective_warmup(&self) -> usize {
        self.warmup.max(self.batch_size)
    }

    pub fn actor_spec(&self) -> MlpSpec {
        MlpSpec::new(vec![self.state_dim, self.hidden[0], self.hidden[1], 1], Activation::Tanh)
    }

    pub fn critic_spec(&self) -> MlpSpec {
        MlpSpec::new(vec![self.state_dim, self.hidden[0], self.hidden[1], 1], Activation::Linear).with_side_input(1, 1)
    }
}

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub actor: Mlp<f64>,
    pub critic: Mlp<f64>,
    pub target_actor: Mlp<f64>,
    pub target_critic: Mlp<f64>,
    actor_opt: AdamState<f64>,
    critic_opt: AdamState<f64>,
    pub buffer: ReplayBuffer,
    config: DdpgConfig,
    global_step: u64,
    rng: ChaCha8Rng,
}

impl DdpgAgent {
    pub fn new(config: DdpgConfig) -> Result<Self, DdpgError> {
        config.validate()?;
        let mut seeder = ChaCha8Rng::seed_from_u64(config.seed);
        let actor = Mlp::init(config.actor_spec(), seeder.random())?;
        let critic = Mlp::init(config.critic_spec(), seeder.random())?;
        Ok(Self::from_networks(config, actor, critic, ChaCha8Rng::seed_from_u64(seeder.random())))
    }

    fn from_networks(config: DdpgConfig, actor: Mlp<f64>, critic: Mlp<f64>, rng: ChaCha8Rng) -> Self {
        Self {
            actor_opt: AdamState::new(actor.param_count(), config.lr_actor),
            critic_opt: AdamState::new(critic.param_count(), config.lr_critic),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            buffer: ReplayBuffer::new(config.buffer_capacity, config.state_dim),
            config,
            global_step: 0,
            rng,
        }
    }

    /// Rebuilds an agent around existing networks; optimizer state and replay start empty.
    pub fn with_networks(
        config: DdpgConfig,
        actor: Mlp<f64>,
        critic: Mlp<f64>,
        target_actor: Mlp<f64>,
        target_critic: Mlp<f64>,
    ) -> Result<Self, DdpgError> {
        config.validate()?;
        for (net, spec) in [
            (&actor, config.actor_spec()),
            (&target_actor, config.actor_spec()),
            (&critic, config.critic_spec()),
            (&target_critic, config.critic_spec()),
        ] {
            if net.spec() != &spec {
                return Err(DdpgError::InvalidConfig("network shape does not match config".into()));
            }
        }
        let mut agent = Self::from_networks(config, actor, critic, ChaCha8Rng::seed_from_u64(config.seed));
        agent.target_actor = target_actor;
        agent.target_critic = target_critic;
        Ok(agent)
    }

    pub fn config(&self) -> &DdpgConfig {
        &self.config
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn epsilon(&self) -> f64 {
        self.config.schedule.epsilon(self.global_step)
    }

    pub(crate) fn advance_step(&mut self) {
        self.global_step += 1;
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn check_state(&self, s: &[f64]) -> Result<(), DdpgError> {
        if s.len() != self.config.state_dim {
            return Err(DdpgError::StateDim { expected: self.config.state_dim, got: s.len() });
        }
        Ok(())
    }

    /// Deterministic policy output.
    pub fn policy(&self, s: &[f64]) -> Result<f64, DdpgError> {
        self.check_state(s)?;
        Ok(self.actor.forward(s)?[0])
    }

    /// With probability `epsilon` adds `beta * N(0, sigma^2)` to the policy output; always clamps to [-1, 1].
    pub fn act_with(&self, s: &[f64], explore: bool, epsilon: f64, rng: &mut impl Rng) -> Result<f64, DdpgError> {
        let mut a = self.policy(s)?;
        if explore {
            let p: f64 = rng.random();
            if p < epsilon {
                let n: f64 = StandardNormal.sample(rng);
                let sch = &self.config.schedule;
                a += sch.beta * sch.sigma * n;
            }
        }
        Ok(a.clamp(-1.0, 1.0))
    }

    /// Acts with the agent's own generator and the scheduled epsilon.
    pub fn act(&mut self, s: &[f64], explore: bool) -> Result<f64, DdpgError> {
        let eps = self.epsilon();
        let mut rng = self.rng.clone();
        let a = self.act_with(s, explore, eps, &mut rng);
        self.rng = rng;
        a
    }

    fn critic_input(s: &[f64], a: f64) -> Vec<f64> {
        let mut x = Vec::with_capacity(s.len() + 1);
        x.extend_from_slice(s);
        x.push(a);
        x
    }

    pub fn q_value(&self, s: &[f64], a: f64) -> Result<f64, DdpgError> {
        self.check_state(s)?;
        Ok(self.critic.forward(&Self::critic_input(s, a))?[0])
    }

    /// Bellman targets `r + gamma Q'(s', mu'(s'))`, cut to `r` on terminal transitions.
    pub fn critic_target(&self, batch: &[TransitionRef<'_>]) -> Result<Vec<f64>, DdpgError> {
        batch
            .iter()
            .map(|t| {
                if t.done {
                    return Ok(t.r);
                }
                let a_next = self.target_actor.forward(t.s_next)?[0];
                let q_next = self.target_critic.forward(&Self::critic_input(t.s_next, a_next))?[0];
                Ok(t.r + self.config.gamma * q_next)
            })
            .collect()
    }

    /// One descent step on the mean squared Bellman error; returns the loss before the step.
    pub fn critic_update(&mut self, batch: &[TransitionRef<'_>]) -> Result<f64, DdpgError> {
        let y = self.critic_target(batch)?;
        let m = batch.len() as f64;
        let mut grads = vec![0.0; self.critic.param_count()];
        let mut loss = 0.0;
        for (t, &yi) in batch.iter().zip(&y) {
            let tape = self.critic.forward_tape(&Self::critic_input(t.s, t.a))?;
            let residual = yi - tape.output()[0];
            loss += residual * residual / m;
            self.critic.backward_accumulate(&tape, &[-2.0 * residual / m], Some(&mut grads))?;
        }
        self.critic_opt.step(self.critic.params_mut(), &grads, Direction::Descend);
        Ok(loss)
    }

    /// Gradient of the mean `Q(s, mu(s))` over the batch with respect to the actor parameters.
    pub fn actor_gradient(&self, batch: &[TransitionRef<'_>]) -> Result<(f64, Vec<f64>), DdpgError> {
        let m = batch.len() as f64;
        let mut grads = vec![0.0; self.actor.param_count()];
        let mut mean_q = 0.0;
        for t in batch {
            let a_tape = self.actor.forward_tape(t.s)?;
            let a = a_tape.output()[0];
            let q_tape = self.critic.forward_tape(&Self::critic_input(t.s, a))?;
            mean_q += q_tape.output()[0] / m;
            let input_grad = self.critic.backward_accumulate(&q_tape, &[1.0 / m], None)?;
            let dq_da = input_grad[self.config.state_dim];
            self.actor.backward_accumulate(&a_tape, &[dq_da], Some(&mut grads))?;
        }
        Ok((mean_q, grads))
    }

    /// One ascent step on the mean critic value of the policy's actions; returns that mean before the step.
    pub fn actor_update(&mut self, batch: &[TransitionRef<'_>]) -> Result<f64, DdpgError> {
        let (mean_q, grads) = self.actor_gradient(batch)?;
        self.actor_opt.step(self.actor.params_mut(), &grads, Direction::Ascend);
        Ok(mean_q)
    }

    /// `w' <- tau w + (1 - tau) w'` for both target networks.
    pub fn soft_update(&mut self) {
        let tau = self.config.tau;
        self.target_actor.blend_toward(&self.actor, tau);
        self.target_critic.blend_toward(&self.critic, tau);
    }

    /// Samples a batch and runs one critic update, one actor update and one target blend.
    /// Returns `(critic loss, mean Q)`.
    pub fn update(&mut self) -> Result<(f64, f64), DdpgError> {
        let need = self.config.effective_warmup();
        if self.buffer.len() < need {
            return Err(DdpgError::InsufficientFill { have: self.buffer.len(), need });
        }
        let idx = self.buffer.sample_indices(&mut self.rng, self.config.batch_size);
        // the batch borrows the buffer, so move it out while the networks change
        let buffer = std::mem::replace(&mut self.buffer, ReplayBuffer::new(1, self.config.state_dim));
        let batch: Vec<TransitionRef<'_>> = idx.iter().map(|&i| buffer.get(i)).collect();
        let result = self.critic_update(&batch).and_then(|loss| Ok((loss, self.actor_update(&batch)?)));
        drop(batch);
        self.buffer = buffer;
        let out = result?;
        self.soft_update();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DdpgConfig {
        DdpgConfig { state_dim: 3, hidden: [8, 8], batch_size: 4, buffer_capacity: 100, warmup: 0, ..Default::default() }
    }

    #[test]
    fn epsilon_schedule() {
        let s = ExplorationSchedule::default();
        assert_eq!(s.epsilon(0), 1.0);
        assert_eq!(s.epsilon(200_000), 0.55);
        assert_eq!(s.epsilon(400_000), 0.1);
        assert_eq!(s.epsilon(10_000_000), 0.1);
    }

    #[test]
    fn greedy_and_zero_epsilon_agree() {
        let agent = DdpgAgent::new(small()).unwrap();
        let s = [0.1, -0.2, 0.3];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let greedy = agent.act_with(&s, false, 1.0, &mut rng).unwrap();
        assert_eq!(greedy, agent.actor.forward(&s).unwrap()[0]);
        assert_eq!(agent.act_with(&s, true, 0.0, &mut rng).unwrap(), greedy);
    }

    #[test]
    fn exploration_replays_seeded_draws() {
        let agent = DdpgAgent::new(small()).unwrap();
        let s = [0.1, -0.2, 0.3];
        let mu = agent.policy(&s).unwrap();
        let a = agent.act_with(&s, true, 1.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let _p: f64 = rng.random();
        let n: f64 = StandardNormal.sample(&mut rng);
        assert_eq!(a, (mu + 0.05 * n).clamp(-1.0, 1.0));
    }

    #[test]
    fn terminal_targets_and_zero_discount() {
        let mut cfg = small();
        let agent = DdpgAgent::new(cfg).unwrap();
        let s = [0.0; 3];
        let batch = [TransitionRef { s: &s, a: 0.1, r: -2.0, s_next: &s, done: true }];
        assert_eq!(agent.critic_target(&batch).unwrap(), vec![-2.0]);
        cfg.gamma = 1e-300;
        let agent = DdpgAgent::new(cfg).unwrap();
        let batch = [TransitionRef { s: &s, a: 0.1, r: 0.7, s_next: &s, done: false }];
        assert!((agent.critic_target(&batch).unwrap()[0] - 0.7).abs() < 1e-290);
    }

    #[test]
    fn soft_update_blends() {
        let mut agent = DdpgAgent::new(DdpgConfig { tau: 1.0, ..small() }).unwrap();
        agent.actor.params_mut()[0] += 1.0;
        agent.soft_update();
        assert_eq!(agent.target_actor, agent.actor);
    }

    #[test]
    fn updates_need_fill() {
        let mut agent = DdpgAgent::new(DdpgConfig { warmup: 10, ..small() }).unwrap();
        assert_eq!(agent.update().unwrap_err(), DdpgError::InsufficientFill { have: 0, need: 10 });
    }

    #[test]
    fn wrong_state_length() {
        let agent = DdpgAgent::new(small()).unwrap();
        assert!(matches!(agent.policy(&[0.0; 2]), Err(DdpgError::StateDim { expected: 3, got: 2 })));
    }
}
