use std::path::Path;

use lanekeep::classic::{find_preset, presets, ControllerPreset, LqrController, MpcController};
use lanekeep::ddpg::PolicyController;
use lanekeep::env::{Controller, EnvConfig};
use lanekeep::{MpcConfig, VehicleParams};

use crate::CliError;

pub const DEFAULT_HORIZON: usize = 10;

pub fn preset(key: &str) -> Result<&'static ControllerPreset, CliError> {
    find_preset(presets(), key).ok_or_else(|| CliError::Usage(format!("preset {key:?} not found")))
}

pub fn lqr(p: &ControllerPreset, env: &EnvConfig, vehicle: &VehicleParams) -> Result<Box<dyn Controller>, CliError> {
    let c = LqrController::synthesize(vehicle, env.speed, &p.weights(), env.dt)
        .map_err(|e| CliError::Runtime(format!("LQR synthesis for preset {}: {e}", p.row)))?;
    Ok(Box::new(c))
}

pub fn mpc(horizon: usize, env: &EnvConfig, vehicle: &VehicleParams) -> Result<Box<dyn Controller>, CliError> {
    let d = vehicle.delta_max;
    let cfg = MpcConfig { dt: env.dt, delta_bounds: [-d, d], ..MpcConfig::default() }.with_horizon(horizon);
    let c = MpcController::new(cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Box::new(c))
}

pub fn ddpg(checkpoint: &Path) -> Result<Box<dyn Controller>, CliError> {
    let c = PolicyController::load(checkpoint)
        .map_err(|e| CliError::Runtime(format!("checkpoint {}: {e}", checkpoint.display())))?;
    Ok(Box::new(c))
}
