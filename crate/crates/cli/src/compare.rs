//! Controller comparison matrix: every preset row scored with LQR, MPC and DDPG over a seed bank.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use lanekeep::classic::{find_preset, presets, ControllerPreset};
use lanekeep::env::{score_episode, Controller, EnvConfig};
use lanekeep::geometry::builtin;
use lanekeep::{Track, VehicleParams};

use crate::controllers;
use crate::settings::{load_track, ControllerKind, RunFlags};
use crate::CliError;

pub const DEFAULT_SEEDS: usize = 5;

pub const CSV_HEADER: &str =
    "track,builtin,preset,controller,q1,q2,q3,q4,rho,horizon,seeds,mean_score,std_score,mean_reward,terminated,status";

/// One `(setup, controller)` cell of the table.
#[derive(Debug, Clone)]
pub struct Cell {
    pub preset: ControllerPreset,
    pub label: String,
    pub track: Arc<Track>,
    pub kind: ControllerKind,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub scores: Vec<f64>,
    pub mean_reward: f64,
    /// Episodes that ended by leaving the lane.
    pub terminated: usize,
    pub discounted: Option<f64>,
    pub error: Option<String>,
}

impl CellResult {
    pub fn mean(&self) -> f64 {
        mean(&self.scores)
    }

    /// Sample standard deviation; zero for fewer than two seeds.
    pub fn std(&self) -> f64 {
        let n = self.scores.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.scores.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }

    pub fn status(&self) -> &str {
        self.error.as_deref().unwrap_or("ok")
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct ScoreTable {
    pub seeds: Vec<u64>,
    pub noise_sigma: f64,
    pub gamma: Option<f64>,
    pub cells: Vec<Cell>,
    pub results: Vec<CellResult>,
}

/// Cells for the requested tracks, presets and controllers, in preset-row order.
pub fn plan(flags: &RunFlags) -> Result<Vec<Cell>, CliError> {
    let all = presets();
    let rows: Vec<&ControllerPreset> = match &flags.preset {
        Some(k) => vec![find_preset(all, k).ok_or_else(|| CliError::Usage(format!("preset {k:?} not found")))?],
        None => all.iter().collect(),
    };
    let custom = match &flags.track {
        Some(t) => Some(load_track(t)?),
        None => None,
    };
    let kinds = match flags.controller {
        Some(k) => vec![k],
        None => vec![ControllerKind::Lqr, ControllerKind::Mpc, ControllerKind::Ddpg],
    };
    let matches_custom = |p: &ControllerPreset, t: &Track| p.builtin == t.name() || p.track == t.name();
    let selected: Vec<&ControllerPreset> = match &custom {
        // a track with no preset rows of its own is scored with every requested setup
        Some(t) if rows.iter().any(|p| matches_custom(p, t)) => rows.into_iter().filter(|p| matches_custom(p, t)).collect(),
        _ => rows,
    };
    let mut cells = Vec::new();
    for p in selected {
        let track = match &custom {
            Some(t) => t.clone(),
            None => Arc::new(builtin(&p.builtin).expect("preset tracks are built in")),
        };
        for &kind in &kinds {
            cells.push(Cell {
                preset: p.clone(),
                label: p.label(all),
                track: track.clone(),
                kind,
                horizon: flags.horizon.unwrap_or(p.horizon),
            });
        }
    }
    Ok(cells)
}

fn build(cell: &Cell, env: &EnvConfig, vehicle: &VehicleParams, checkpoint: Option<&Path>) -> Result<Box<dyn Controller>, CliError> {
    match cell.kind {
        ControllerKind::Lqr => controllers::lqr(&cell.preset, env, vehicle),
        ControllerKind::Mpc => controllers::mpc(cell.horizon, env, vehicle),
        ControllerKind::Ddpg => match checkpoint {
            Some(dir) => controllers::ddpg(dir),
            None => Err(CliError::Runtime("no checkpoint".into())),
        },
    }
}

/// Scores every cell on every seed; jobs run in parallel and merge by index.
pub fn evaluate(cells: Vec<Cell>, seeds: Vec<u64>, base: EnvConfig, gamma: Option<f64>, checkpoint: Option<&Path>) -> ScoreTable {
    let vehicle = VehicleParams::default();
    let jobs: Vec<(usize, u64)> = (0..cells.len()).flat_map(|c| seeds.iter().map(move |&s| (c, s))).collect();
    let outcomes: Vec<Result<(f64, f64, bool, f64), String>> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let cell = &cells[c];
            let env = EnvConfig { seed, ..base };
            let mut controller = build(cell, &env, &vehicle, checkpoint).map_err(|e| e.to_string())?;
            let s = score_episode(&mut controller, cell.track.clone(), env, vehicle).map_err(|e| e.to_string())?;
            Ok((s.total, s.mean_reward(), s.terminated_early, gamma.map_or(f64::NAN, |g| s.discounted(g))))
        })
        .collect();

    let results = outcomes
        .chunks(seeds.len().max(1))
        .map(|chunk| {
            let error = chunk.iter().find_map(|r| r.as_ref().err().cloned());
            let ok: Vec<_> = chunk.iter().filter_map(|r| r.as_ref().ok()).collect();
            CellResult {
                scores: ok.iter().map(|r| r.0).collect(),
                mean_reward: mean(&ok.iter().map(|r| r.1).collect::<Vec<_>>()),
                terminated: ok.iter().filter(|r| r.2).count(),
                discounted: gamma.map(|_| mean(&ok.iter().map(|r| r.3).collect::<Vec<_>>())),
                error,
            }
        })
        .collect();
    ScoreTable { seeds, noise_sigma: base.noise_sigma, gamma, cells, results }
}

impl ScoreTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        if self.gamma.is_some() {
            out.push_str(",discounted");
        }
        out.push('\n');
        let seeds = self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ");
        for (cell, r) in self.cells.iter().zip(&self.results) {
            let [q1, q2, q3, q4] = cell.preset.q;
            let (q, rho, hp) = match cell.kind {
                ControllerKind::Lqr => (format!("{q1},{q2},{q3},{q4}"), cell.preset.rho.to_string(), String::new()),
                ControllerKind::Mpc => (",,,".to_string(), String::new(), cell.horizon.to_string()),
                ControllerKind::Ddpg => (",,,".to_string(), String::new(), String::new()),
            };
            let _ = write!(
                out,
                "{},{},{},{},{q},{rho},{hp},{seeds},{},{},{},{},{}",
                cell.preset.track,
                cell.track.name(),
                cell.label,
                cell.kind.name(),
                r.mean(),
                r.std(),
                r.mean_reward,
                r.terminated,
                r.status().replace(',', ";"),
            );
            if let Some(d) = r.discounted {
                let _ = write!(out, ",{d}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let seeds = self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",");
        let mut out = format!(
            "# scores: mean ± std of undiscounted episode totals over {} seed(s) [{seeds}], noise sigma {}\n",
            self.seeds.len(),
            self.noise_sigma
        );
        let mut rows = vec![vec![
            "track".to_string(),
            "preset".into(),
            "controller".into(),
            "setup".into(),
            "score".into(),
            "mean r".into(),
            "status".into(),
        ]];
        if self.gamma.is_some() {
            rows[0].push("discounted".into());
        }
        for (cell, r) in self.cells.iter().zip(&self.results) {
            let [q1, q2, q3, q4] = cell.preset.q;
            let setup = match cell.kind {
                ControllerKind::Lqr => format!("q=({q1}, {q2}, {q3}, {q4}) rho={}", cell.preset.rho),
                ControllerKind::Mpc => format!("Hp={}", cell.horizon),
                ControllerKind::Ddpg => "policy".into(),
            };
            let score = if r.scores.is_empty() { "-".into() } else { format!("{:.1} ± {:.1}", r.mean(), r.std()) };
            let status = match (&r.error, r.terminated) {
                (Some(e), _) => format!("failed: {e}"),
                (None, 0) => "ok".into(),
                (None, n) => format!("{n} terminated"),
            };
            let mut row = vec![
                format!("{} ({})", cell.preset.track, cell.track.name()),
                cell.label.clone(),
                cell.kind.name().into(),
                setup,
                score,
                if r.mean_reward.is_nan() { "-".into() } else { format!("{:.4}", r.mean_reward) },
                status,
            ];
            if let Some(d) = r.discounted {
                row.push(format!("{d:.3}"));
            }
            rows.push(row);
        }
        let widths: Vec<usize> =
            (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
        for row in &rows {
            let line: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| r.error.is_some()).count()
    }
}

pub fn cmd_compare(flags: &RunFlags, out: &mut dyn Write) -> Result<(), CliError> {
    let gamma = flags.gamma()?;
    let n = flags.episodes.unwrap_or(DEFAULT_SEEDS);
    if n == 0 {
        return Err(CliError::Usage("--episodes (seed bank size) must be at least 1".into()));
    }
    let base = flags.env_config();
    base.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let seeds: Vec<u64> = (0..n as u64).map(|k| base.seed.wrapping_add(k)).collect();
    let cells = plan(flags)?;
    let table = evaluate(cells, seeds, base, gamma, flags.checkpoint.as_deref());
    out.write_all(table.to_text().as_bytes())?;
    if let Some(path) = &flags.out {
        std::fs::write(path, table.to_csv())?;
        writeln!(out, "CSV written to {}", path.display())?;
    }
    Ok(())
}
