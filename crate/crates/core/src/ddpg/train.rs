use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DdpgAgent, DdpgConfig, DdpgError};
use crate::env::{ControlContext, Controller, ControllerError, Env, EnvError};
use crate::nn::{CheckpointError, Mlp};

pub const TRAINING_LOG_HEADER: &str = "episode,steps,cumulative_reward,epsilon";

const MANIFEST_VERSION: u32 = 1;
const NETWORK_FILES: [&str; 4] = ["actor.bin", "critic.bin", "target_actor.bin", "target_critic.bin"];

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] DdpgError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub steps: usize,
    pub cumulative_reward: f64,
    /// Exploration probability when the episode ended.
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
    pub env_steps: u64,
    pub updates: u64,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAINING_LOG_HEADER);
        out.push('\n');
        for e in &self.episodes {
            let _ = writeln!(out, "{},{},{},{}", e.episode, e.steps, e.cumulative_reward, e.epsilon);
        }
        out
    }

    /// Mean cumulative reward of the first and last `n` episodes.
    pub fn head_tail_means(&self, n: usize) -> Option<(f64, f64)> {
        if self.episodes.is_empty() {
            return None;
        }
        let k = n.min(self.episodes.len());
        let mean = |xs: &[EpisodeLog]| xs.iter().map(|e| e.cumulative_reward).sum::<f64>() / xs.len() as f64;
        Some((mean(&self.episodes[..k]), mean(&self.episodes[self.episodes.len() - k..])))
    }
}

/// Runs `total_steps` environment steps of exploration and learning.
///
/// Episode `k` (from 0) resets the environment with seed `base + k`, where `base`
/// is the environment's configured seed. Once the replay holds the warm-up fill,
/// every step performs one critic update, one actor update and one target blend.
pub fn train(
    agent: &mut DdpgAgent,
    env: &mut Env,
    total_steps: u64,
    mut on_episode: impl FnMut(&EpisodeLog),
) -> Result<TrainingLog, TrainError> {
    let base_seed = env.config().seed;
    let warmup = agent.config().effective_warmup();
    let mut log = TrainingLog::default();
    let mut obs: Option<Vec<f64>> = None;
    let (mut ep_reward, mut ep_steps) = (0.0, 0usize);

    for _ in 0..total_steps {
        let s = match obs.take() {
            Some(s) => s,
            None => {
                let seed = base_seed.wrapping_add(log.episodes.len() as u64);
                ep_reward = 0.0;
                ep_steps = 0;
                env.reset_with_seed(seed).to_array().to_vec()
            }
        };
        let a = agent.act(&s, true)?;
        let res = env.step(a)?;
        let s_next = res.obs.to_array();
        agent.buffer.push_parts(&s, a, res.reward, &s_next, res.info.terminated);
        if agent.buffer.len() >= warmup {
            agent.update()?;
            log.updates += 1;
        }
        agent.advance_step();
        log.env_steps += 1;
        ep_reward += res.reward;
        ep_steps += 1;
        if res.done {
            let entry = EpisodeLog {
                episode: log.episodes.len() + 1,
                steps: ep_steps,
                cumulative_reward: ep_reward,
                epsilon: agent.epsilon(),
            };
            on_episode(&entry);
            log.episodes.push(entry);
        } else {
            obs = Some(s_next.to_vec());
        }
    }
    env.reconfigure(crate::env::EnvConfig { seed: base_seed, ..*env.config() })?;
    Ok(log)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub global_step: u64,
    pub files: Vec<String>,
    pub agent: DdpgConfig,
}

/// Writes the four networks and a manifest of hyperparameters into `dir`.
pub fn save_agent(agent: &DdpgAgent, dir: impl AsRef<Path>) -> Result<(), TrainError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let nets = [&agent.actor, &agent.critic, &agent.target_actor, &agent.target_critic];
    for (name, net) in NETWORK_FILES.iter().zip(nets) {
        net.save(dir.join(name))?;
    }
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        global_step: agent.global_step(),
        files: NETWORK_FILES.iter().map(|s| s.to_string()).collect(),
        agent: *agent.config(),
    };
    let text = toml::to_string_pretty(&manifest).map_err(|e| TrainError::Manifest(e.to_string()))?;
    std::fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

pub fn load_manifest(dir: impl AsRef<Path>) -> Result<Manifest, TrainError> {
    let text = std::fs::read_to_string(dir.as_ref().join("manifest.toml"))?;
    let m: Manifest = toml::from_str(&text).map_err(|e| TrainError::Manifest(e.to_string()))?;
    if m.format_version != MANIFEST_VERSION {
        return Err(TrainError::Manifest(format!("unsupported format version {}", m.format_version)));
    }
    Ok(m)
}

/// Restores networks and hyperparameters; optimizer moments and replay start empty.
pub fn load_agent(dir: impl AsRef<Path>) -> Result<DdpgAgent, TrainError> {
    let dir = dir.as_ref();
    let m = load_manifest(dir)?;
    let [a, c, ta, tc] = NETWORK_FILES.map(|f| Mlp::<f64>::load(dir.join(f)));
    let mut agent = DdpgAgent::with_networks(m.agent, a?, c?, ta?, tc?)?;
    for _ in 0..m.global_step {
        agent.advance_step();
    }
    Ok(agent)
}

/// Frozen actor used as a controller on the (noisy) observation.
#[derive(Debug, Clone)]
pub struct PolicyController {
    actor: Mlp<f64>,
}

impl PolicyController {
    pub fn new(actor: Mlp<f64>) -> Self {
        Self { actor }
    }

    pub fn from_agent(agent: &DdpgAgent) -> Self {
        Self::new(agent.actor.clone())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, TrainError> {
        let dir = dir.as_ref();
        load_manifest(dir)?;
        Ok(Self::new(Mlp::load(dir.join(NETWORK_FILES[0]))?))
    }
}

impl Controller for PolicyController {
    fn act(&mut self, ctx: &ControlContext<'_>) -> Result<f64, ControllerError> {
        let out = self.actor.forward(&ctx.obs.to_array()).map_err(|e| ControllerError::Failed(e.to_string()))?;
        Ok(out[0].clamp(-1.0, 1.0))
    }
}
