//! Conservative contextual combinatorial bandits.
//!
//! The crate provides:
//!
//! * [`linalg`]: ridge-regression statistics and confidence bounds,
//! * [`reward`]: super-arm reward functions and the top-K oracle,
//! * [`policy`]: CCConUCB (known and unknown conservative reward), C²UCB and
//!   the always-conservative baseline,
//! * [`env`]: seeded synthetic linear-reward environments,
//! * [`harness`]: episode runner, metrics and runtime checks of the analytic
//!   inequalities behind the algorithm.

pub mod env;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod policy;
pub mod reward;
pub mod rng;

pub use env::{EnvironmentInstance, FeatureLaw, GeneratorConfig, NoiseModel, OracleQuantities, RoundContext};
pub use error::{Error, Result};
pub use harness::{run_episode, Episode, EpisodeConfig, ProbeReport, RunLog, RunMeta, RunRecord};
pub use linalg::{FeatureVector, RidgeState, WeightBound};
pub use policy::{commit, step, Decision, History, PolicyConfig, PolicyKind, RecomputeMode};
pub use reward::{argmax_super_arm, brute_force_argmax, ActionSet, RewardFunction};
