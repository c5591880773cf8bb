use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, ValueEnum};
use serde::Deserialize;

use lanekeep::classic::presets;
use lanekeep::env::EnvConfig;
use lanekeep::geometry::{builtin, builtin_names};
use lanekeep::Track;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Lqr,
    Mpc,
    Ddpg,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Lqr => "lqr",
            ControllerKind::Mpc => "mpc",
            ControllerKind::Ddpg => "ddpg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Toggle {
    On,
    Off,
}

/// Flags shared by every run command. Each may also come from the `--config` TOML file;
/// command-line values win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFlags {
    /// Built-in track name, original track name, or path to a track JSON file.
    #[arg(long)]
    pub track: Option<String>,
    #[arg(long, value_enum)]
    pub controller: Option<ControllerKind>,
    /// Comparison preset: row number or label such as `forza-2`.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Observation noise.
    #[arg(long, value_enum)]
    pub noise: Option<Toggle>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also report scores discounted by this factor.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// MPC prediction horizon.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// DDPG checkpoint directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// TOML file of `key = value` defaults using the flag names above.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),*) => { $( if $dst.$f.is_none() { $dst.$f = $src.$f; } )* };
}

impl RunFlags {
    /// Fills unset flags from the config file, if one was given.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let file: RunFlags = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        overlay!(self, file, track, controller, preset, seed, steps, episodes, noise, port, out, gamma, horizon, checkpoint);
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn track_name(&self) -> &str {
        self.track.as_deref().unwrap_or("oval")
    }

    pub fn env_config(&self) -> EnvConfig {
        let cfg = EnvConfig { seed: self.seed(), ..EnvConfig::default() };
        match self.noise.unwrap_or(Toggle::On) {
            Toggle::On => cfg,
            Toggle::Off => cfg.without_noise(),
        }
    }

    pub fn gamma(&self) -> Result<Option<f64>, CliError> {
        match self.gamma {
            Some(g) if !(0.0..=1.0).contains(&g) => Err(CliError::Usage(format!("--gamma must lie in [0, 1], got {g}"))),
            g => Ok(g),
        }
    }
}

/// Resolves a built-in name, an original comparison track name, or a JSON file path.
pub fn load_track(spec: &str) -> Result<Arc<Track>, CliError> {
    if let Some(t) = builtin(spec) {
        return Ok(Arc::new(t));
    }
    if let Some(p) = presets().iter().find(|p| p.track.eq_ignore_ascii_case(spec)) {
        return Ok(Arc::new(builtin(&p.builtin).expect("preset tracks are built in")));
    }
    let path = Path::new(spec);
    if path.extension().is_some() || path.components().count() > 1 || path.exists() {
        return Track::load(path).map(Arc::new).map_err(|e| CliError::Runtime(format!("{spec}: {e}")));
    }
    Err(CliError::Usage(format!("unknown track {spec:?}; built-ins are {}", builtin_names().join(", "))))
}
