use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lanekeep::classic::presets;
use lanekeep::ddpg::{self, save_agent, DdpgAgent, DdpgConfig};
use lanekeep::env::{run_episode, Controller, Env, EnvConfig, TraceWriter};
use lanekeep::protocol::{EnvFactory, Server, ServerConfig};
use lanekeep::VehicleParams;

use crate::controllers::{self, DEFAULT_HORIZON};
use crate::settings::{load_track, ControllerKind, RunFlags};
use crate::CliError;

pub const DEFAULT_TRAIN_STEPS: u64 = 200_000;
pub const DEFAULT_PORT: u16 = 7878;
pub const TRAINING_LOG_FILE: &str = "training_log.csv";

pub fn train(flags: &RunFlags, out: &mut dyn Write) -> Result<(), CliError> {
    if flags.controller.is_some_and(|c| c != ControllerKind::Ddpg) {
        return Err(CliError::Usage("train only supports --controller ddpg".into()));
    }
    let dir = flags.out.clone().unwrap_or_else(|| PathBuf::from("lanekeep-train"));
    let track = load_track(flags.track_name())?;
    let mut env = Env::new(track, flags.env_config(), VehicleParams::default()).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut agent = DdpgAgent::new(DdpgConfig { seed: flags.seed(), ..DdpgConfig::default() })
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let steps = flags.steps.unwrap_or(DEFAULT_TRAIN_STEPS);

    let log = ddpg::train(&mut agent, &mut env, steps, |_| {}).map_err(|e| CliError::Runtime(e.to_string()))?;
    save_agent(&agent, &dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(dir.join(TRAINING_LOG_FILE), log.to_csv())?;

    writeln!(out, "trained {} steps, {} episodes, {} updates", log.env_steps, log.episodes.len(), log.updates)?;
    match log.head_tail_means(10) {
        Some((first, last)) => writeln!(out, "first-10 mean reward {first:.3}, final-10 mean reward {last:.3}")?,
        None => writeln!(out, "no completed episodes")?,
    }
    writeln!(out, "checkpoint written to {}", dir.display())?;
    Ok(())
}

/// Controller for `eval` and `compare` cells.
pub(crate) fn build_controller(
    kind: ControllerKind,
    flags: &RunFlags,
    track_name: &str,
    env: &EnvConfig,
    vehicle: &VehicleParams,
) -> Result<(Box<dyn Controller>, String), CliError> {
    match kind {
        ControllerKind::Lqr => {
            let p = match &flags.preset {
                Some(k) => controllers::preset(k)?,
                None => presets().iter().find(|p| p.builtin == track_name).unwrap_or(&presets()[0]),
            };
            let [q1, q2, q3, q4] = p.q;
            let setup = format!("preset {} (q={q1},{q2},{q3},{q4} rho={})", p.label(presets()), p.rho);
            Ok((controllers::lqr(p, env, vehicle)?, setup))
        }
        ControllerKind::Mpc => {
            let hp = match (flags.horizon, &flags.preset) {
                (Some(h), _) => h,
                (None, Some(k)) => controllers::preset(k)?.horizon,
                (None, None) => DEFAULT_HORIZON,
            };
            Ok((controllers::mpc(hp, env, vehicle)?, format!("Hp={hp}")))
        }
        ControllerKind::Ddpg => {
            let dir = flags.checkpoint.as_deref().ok_or_else(|| CliError::Usage("ddpg needs --checkpoint".into()))?;
            Ok((controllers::ddpg(dir)?, format!("checkpoint {}", dir.display())))
        }
    }
}

/// `trace.csv` for one episode; `trace-ep2.csv` and so on for several.
fn trace_path(base: &Path, episode: usize, episodes: usize) -> PathBuf {
    if episodes == 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "trace".into());
    let name = match base.extension() {
        Some(ext) => format!("{stem}-ep{episode}.{}", ext.to_string_lossy()),
        None => format!("{stem}-ep{episode}"),
    };
    base.with_file_name(name)
}

pub fn eval(flags: &RunFlags, out: &mut dyn Write) -> Result<(), CliError> {
    let kind = flags.controller.unwrap_or(ControllerKind::Lqr);
    let gamma = flags.gamma()?;
    let episodes = flags.episodes.unwrap_or(1);
    if episodes == 0 {
        return Err(CliError::Usage("--episodes must be at least 1".into()));
    }
    let track = load_track(flags.track_name())?;
    let vehicle = VehicleParams::default();
    let base = flags.env_config();
    let (mut controller, setup) = build_controller(kind, flags, track.name(), &base, &vehicle)?;
    writeln!(out, "{} on {} ({setup}), noise sigma {}", kind.name(), track.name(), base.noise_sigma)?;

    let mut totals = Vec::with_capacity(episodes);
    for k in 0..episodes {
        let seed = base.seed.wrapping_add(k as u64);
        let mut env = Env::new(track.clone(), EnvConfig { seed, ..base }, vehicle).map_err(|e| CliError::Usage(e.to_string()))?;
        let score = match &flags.out {
            Some(path) => {
                let path = trace_path(path, k + 1, episodes);
                let mut w = TraceWriter::new(BufWriter::new(File::create(&path)?))?;
                let s = run_episode(&mut env, &mut controller, |r| w.write_row(r));
                w.into_inner().flush()?;
                s
            }
            None => run_episode(&mut env, &mut controller, |_| Ok(())),
        }
        .map_err(|e| CliError::Runtime(e.to_string()))?;
        write!(
            out,
            "episode {} seed {seed}: score {:.3} steps {} mean reward {:.4} mean |d| {:.3} m{}",
            k + 1,
            score.total,
            score.steps,
            score.mean_reward(),
            score.mean_abs_d,
            if score.terminated_early { " TERMINATED" } else { "" }
        )?;
        if let Some(g) = gamma {
            write!(out, " discounted {:.3}", score.discounted(g))?;
        }
        writeln!(out)?;
        totals.push(score.total);
    }
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    writeln!(out, "mean score {mean:.3} over {episodes} episode(s)")?;
    Ok(())
}

pub fn serve(flags: &RunFlags, sessions: Option<u64>, out: &mut dyn Write) -> Result<(), CliError> {
    let track = load_track(flags.track_name())?;
    let env = flags.env_config();
    // fail fast on a bad config instead of at the first hello
    Env::new(track.clone(), env, VehicleParams::default()).map_err(|e| CliError::Usage(e.to_string()))?;
    let factory: EnvFactory = Box::new(move |cfg| Env::new(track.clone(), cfg, VehicleParams::default()));
    let port = flags.port.unwrap_or(DEFAULT_PORT);
    let server = Server::bind(("127.0.0.1", port), factory, ServerConfig { env, ..ServerConfig::default() })
        .map_err(|e| CliError::Runtime(format!("bind 127.0.0.1:{port}: {e}")))?;
    writeln!(out, "listening on {}", server.local_addr()?)?;
    out.flush()?;
    let mut served = 0u64;
    while sessions.map_or(true, |n| served < n) {
        let s = server.serve_one()?;
        served += 1;
        writeln!(
            out,
            "session {served}: {} episodes, {} steps, {} requests, {} errors",
            s.episodes, s.steps, s.requests, s.errors
        )?;
        out.flush()?;
    }
    Ok(())
}
