//! Passivity-aware safe reinforcement learning for a contact-rich planar maze.
//!
//! * [`control`]: Cartesian variable-impedance controller.
//! * [`passivity`]: energy tank, flow scaling and the passivity layer.
//! * [`sim`]: the maze environment and its CMDP semantics.
//! * [`nn`]: small MLPs with reverse-mode gradients and Adam.
//! * [`rl`]: SAC task policy, safety critic and recovery policy.
//! * [`harness`]: experiment orchestration and file formats.

pub mod config;
pub mod control;
pub mod error;
pub mod harness;
pub mod nn;
pub mod passivity;
pub mod rl;
pub mod sim;

pub use config::{ConstraintSet, RunConfig};
pub use control::{
    ActionStiffness, DampingMatrix, ForceCommand, PoseError, StiffnessMatrix, Twist, Vec2, Wrench,
};
pub use error::{Error, Result};
pub use passivity::{TankConfig, TankState};
pub use sim::{MazeEnv, MazeSpec, Observation, RLAction, SimParams, SimState, StepOutcome};
