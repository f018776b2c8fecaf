//! Simulator for decentralised cooperative multi-armed bandits with
//! corrupted rewards and Byzantine agents.
//!
//! The core types are generic over the scalar (`f32` or `f64`); the filter
//! also runs on exact rationals. Aliases for the common `f64` case live at
//! the crate root.

pub mod adversary;
pub mod baselines;
pub mod config;
pub mod demabar;
pub mod engine;
pub mod environment;
pub mod metrics;
pub mod output;
pub mod rng;
pub mod scalar;
pub mod topology;

pub use config::{parse_config, parse_config_str, AlgorithmName, ConfigError, ExperimentConfig, ThreatModel};
pub use engine::{run_experiment, run_trial, EngineError, TrialOptions};
pub use scalar::{Field, Scalar, Tolerance};
pub use topology::{GraphSpec, NeighborhoodStats, Topology};

pub type BanditInstance = environment::BanditInstance<f64>;
pub type RewardMatrix = environment::RewardMatrix<f64>;
pub type DemabarAgent = demabar::DemabarAgent<f64>;
pub type EpochMessage = demabar::EpochMessage<f64>;
pub type CorruptionLedger = adversary::CorruptionLedger<f64>;
pub type RoundLog = engine::RoundLog<f64>;
pub type ExperimentResult = engine::ExperimentResult<f64>;
pub type RegretCurve = metrics::RegretCurve<f64>;

pub type DemabarAgentF32 = demabar::DemabarAgent<f32>;
pub type RoundLogF32 = engine::RoundLog<f32>;
