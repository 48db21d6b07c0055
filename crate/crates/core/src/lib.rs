//! Reachability-based intrinsic rewards on procedurally generated grid
//! worlds: environments, hashing, forward models, the episodic buffer,
//! reward formulas, a tabular trainer and an experiment harness.

pub mod agent;
pub mod dynamics;
pub mod error;
pub mod gridworld;
pub mod harness;
pub mod hashing;
pub mod intrinsic;
pub mod reachability;

pub use agent::{
    train, DynamicsBackend, EpisodeLog, EpsilonSchedule, LifelongKind, QTable, StepRecord,
    TrainConfig,
};
pub use dynamics::{ForwardModel, OracleDynamics, OutputMode, TabularDynamics, TransitionRecord};
pub use error::{Error, Result};
pub use gridworld::{Action, EnvSpec, GridEnv, Observation, Panorama, PositionWorld, Simulator};
pub use harness::ExperimentConfig;
pub use hashing::{HashCode, SimHasher};
pub use intrinsic::{DecaySchedule, RewardKind};
pub use reachability::{ActionMode, EpisodicBuffer, ExpansionConfig};
