//! Decentralized formation control with navigation functions under limited
//! and intermittent sensing.
//!
//! Each agent descends its own navigation function, built from a formation
//! goal and a product of connectivity and collision factors, while it senses
//! all of its formation neighbors, and holds still otherwise.

pub mod geom;
pub mod model;
pub mod navigation;
pub mod plot;
pub mod sim;
pub mod switching;
pub mod verify;

pub use geom::{distance, Vec2};
pub use model::{
    validate_scenario, AgentState, FormationSpec, Integration, MonitorConfig, ObstacleSet, Params,
    Scenario, ScenarioError, Violation,
};
pub use navigation::{Field, NavigationError, NavigationEval};
pub use sim::{run, RunOutput, SimError, SimOptions, TrajectoryLog};
pub use switching::{ActiveSets, FailureTimeline, LinkFailureModel, Outage, RandomFailures};
