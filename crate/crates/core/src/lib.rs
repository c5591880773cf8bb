//! Lateral vehicle control laboratory: track geometry, a kinematic bicycle plant,
//! LQR and MPC baselines, a DDPG agent and a TCP environment server.
//!
//! Numerical cores are generic over [`scalar::Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which the environment and agent use throughout.

pub mod classic;
pub mod ddpg;
pub mod dynamics;
pub mod env;
pub mod geometry;
pub mod nn;
pub mod protocol;
pub mod scalar;

pub type Track = geometry::Track<f64>;
pub type TrackPose = geometry::TrackPose<f64>;
pub type WorldPose = geometry::WorldPose<f64>;
pub type VehicleParams = dynamics::VehicleParams<f64>;
pub type KinematicState = dynamics::KinematicState<f64>;
pub type ErrorState = dynamics::ErrorState<f64>;
pub type Mlp = nn::Mlp<f64>;
pub type LqrWeights = classic::LqrWeights<f64>;
pub type LqrGain = classic::LqrGain<f64>;
pub type MpcConfig = classic::MpcConfig<f64>;
pub type MpcSolution = classic::MpcSolution<f64>;

pub type Track32 = geometry::Track<f32>;
pub type VehicleParams32 = dynamics::VehicleParams<f32>;
pub type Mlp32 = nn::Mlp<f32>;
