use std::io::Write;
use std::path::PathBuf;

use clap::Subcommand;

use lanekeep::geometry::{builtin, builtin_names, SegmentKind};
use lanekeep::Track;

use crate::CliError;

#[derive(Debug, Subcommand)]
pub enum TracksCommand {
    /// Built-in tracks with length and curvature statistics.
    List,
    /// Write a built-in track as JSON.
    Emit {
        name: String,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a track JSON file.
    Validate { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackStats {
    pub length: f64,
    pub segments: usize,
    pub max_abs_curvature: f64,
    /// Fraction of the length spent in arcs.
    pub curved_fraction: f64,
}

pub fn stats(t: &Track) -> TrackStats {
    let segs = t.segments();
    let curved: f64 = segs.iter().filter(|s| s.kind == SegmentKind::Arc).map(|s| s.length).sum();
    TrackStats {
        length: t.length(),
        segments: segs.len(),
        max_abs_curvature: segs.iter().map(|s| s.curvature.abs()).fold(0.0, f64::max),
        curved_fraction: curved / t.length(),
    }
}

fn describe(t: &Track) -> String {
    let s = stats(t);
    format!(
        "{:<11} length {:>8.1} m  segments {:>2}  half-width {} m  max curvature {:.4} 1/m  curved {:>3.0}%  {}",
        t.name(),
        s.length,
        s.segments,
        t.half_width(),
        s.max_abs_curvature,
        100.0 * s.curved_fraction,
        if t.is_closed() { "closed" } else { "open" }
    )
}

pub fn cmd_tracks(cmd: TracksCommand, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        TracksCommand::List => {
            for name in builtin_names() {
                writeln!(out, "{}", describe(&builtin(name).expect("built-in")))?;
            }
        }
        TracksCommand::Emit { name, out: path } => {
            let t: Track = builtin(&name).ok_or_else(|| {
                CliError::Usage(format!("unknown built-in {name:?}; choose from {}", builtin_names().join(", ")))
            })?;
            let json = t.to_json_string();
            match path {
                Some(p) => {
                    std::fs::write(&p, json + "\n")?;
                    writeln!(out, "wrote {} to {}", name, p.display())?;
                }
                None => writeln!(out, "{json}")?,
            }
        }
        TracksCommand::Validate { path } => {
            let t = Track::load(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            writeln!(out, "valid: {}", describe(&t))?;
        }
    }
    Ok(())
}
