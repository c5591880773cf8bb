use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::lqr::LqrWeights;
use super::ClassicError;

const BUNDLED: &str = include_str!("../../presets/comparison.toml");

/// One row of the controller comparison: an LQR weight set and an MPC horizon for a track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerPreset {
    pub row: usize,
    pub track: String,
    /// Built-in track standing in for `track`.
    pub builtin: String,
    pub q: [f64; 4],
    pub rho: f64,
    pub horizon: usize,
}

impl ControllerPreset {
    pub fn weights(&self) -> LqrWeights<f64> {
        let [q1, q2, q3, q4] = self.q;
        LqrWeights { q1, q2, q3, q4, rho: self.rho }
    }

    /// `forza-1`, `forza-2`, ... numbering within the track.
    pub fn label(&self, all: &[ControllerPreset]) -> String {
        let idx = all.iter().filter(|p| p.track == self.track && p.row <= self.row).count();
        format!("{}-{}", self.track, idx)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetFile {
    preset: Vec<ControllerPreset>,
}

pub fn parse_presets(text: &str) -> Result<Vec<ControllerPreset>, ClassicError> {
    let file: PresetFile = toml::from_str(text).map_err(|e| ClassicError::Preset(e.to_string()))?;
    for p in &file.preset {
        p.weights().validate()?;
        if p.horizon < 1 {
            return Err(ClassicError::Preset(format!("row {}: horizon must be at least 1", p.row)));
        }
    }
    Ok(file.preset)
}

/// The twelve bundled comparison rows.
pub fn presets() -> &'static [ControllerPreset] {
    static CELL: OnceLock<Vec<ControllerPreset>> = OnceLock::new();
    CELL.get_or_init(|| parse_presets(BUNDLED).expect("bundled presets are valid"))
}

pub fn bundled_presets_toml() -> &'static str {
    BUNDLED
}

/// Looks up a preset by row number (`"3"`) or label (`"forza-3"`).
pub fn find_preset<'a>(all: &'a [ControllerPreset], key: &str) -> Option<&'a ControllerPreset> {
    if let Ok(row) = key.parse::<usize>() {
        return all.iter().find(|p| p.row == row);
    }
    all.iter().find(|p| p.label(all).eq_ignore_ascii_case(key))
}
