//! Deterministic planar maze with penalty contacts, driven through the
//! impedance controller and the passivity layer.

pub mod contact;
mod env;
pub mod maze;

pub use contact::{contact_forces, ContactForces, ContactParams, ObstacleState};
pub use env::{
    check_constraints, env_step, reset, reset_at, MazeEnv, Observation, RLAction, RewardWeights,
    SimParams, SimState, StepInfo, StepOutcome, TickRecord, Violations, DP_MAX,
};
pub use maze::{DiscObstacle, MazeSpec, Rect};
