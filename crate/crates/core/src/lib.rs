//! Risk-budgeted edge inference scheduling.
//!
//! The crate simulates mobile users offloading deadline-sensitive inference
//! tasks to a shared edge platform and schedules them slot by slot with a
//! potential game whose players carry dynamic risk budgets.

pub mod baselines;
pub mod config;
pub mod environment;
pub mod error;
pub mod game;
pub mod harness;
pub mod model;
pub mod predictor;
pub mod risk;

pub use baselines::PolicyTag;
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use game::{GameConfig, GameOutcome, GameVariant, JointProfile, SelectionRule, SlotGame};
pub use model::{Action, ActionGrid, EpisodeLog, ResourcePools, SlotRecord, SlotState, TaskSpec, UserProfile};
