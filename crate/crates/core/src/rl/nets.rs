use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{Activation, Head, Mlp};
use crate::sim::{Observation, RLAction};

pub const ACTION_DIM: usize = 4;
/// Wrench normalization, N.
const FORCE_SCALE: f64 = 40.0;
const FORCE_CLIP: f64 = 5.0;
const POSITION_CENTER: f64 = 0.2;
const POSITION_SCALE: f64 = 0.2;

/// The four networks of the learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// Q(s, a) on the 9-dim task observation.
    Critic,
    /// Squashed Gaussian task policy.
    Actor,
    /// Sigmoid risk estimate on the 6-dim wrench and the action.
    SafetyCritic,
    /// Squashed Gaussian recovery policy on the wrench.
    Recovery,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Critic,
        Architecture::Actor,
        Architecture::SafetyCritic,
        Architecture::Recovery,
    ];

    pub fn io(self) -> (usize, usize, Head) {
        let task = Observation::TASK_DIM;
        let safe = Observation::SAFETY_DIM;
        match self {
            Architecture::Critic => (task + ACTION_DIM, 1, Head::Linear),
            Architecture::Actor => (task, 2 * ACTION_DIM, Head::SquashedGaussian),
            Architecture::SafetyCritic => (safe + ACTION_DIM, 1, Head::Sigmoid),
            Architecture::Recovery => (safe, 2 * ACTION_DIM, Head::SquashedGaussian),
        }
    }

    pub fn build<R: Rng + ?Sized>(self, hidden: &[usize], rng: &mut R) -> Result<Mlp> {
        let (i, o, head) = self.io();
        Mlp::with_hidden(i, hidden, o, Activation::Relu, head, rng)
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Critic => "critic",
            Architecture::Actor => "actor",
            Architecture::SafetyCritic => "safety_critic",
            Architecture::Recovery => "recovery",
        }
    }
}

fn scale_wrench(w: &[f64]) -> impl Iterator<Item = f64> + '_ {
    w.iter().map(|f| (f / FORCE_SCALE).clamp(-FORCE_CLIP, FORCE_CLIP))
}

/// Network input for a raw 9-dim task observation.
pub fn task_features(obs: &[f64; 9]) -> [f64; 9] {
    let mut out = [0.0; 9];
    for (o, v) in out.iter_mut().zip(scale_wrench(&obs[..6])) {
        *o = v;
    }
    for i in 6..8 {
        out[i] = (obs[i] - POSITION_CENTER) / POSITION_SCALE;
    }
    out[8] = obs[8] / POSITION_SCALE;
    out
}

/// Network input for the 6-dim wrench part of a task observation.
pub fn safety_features(obs: &[f64; 9]) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (o, v) in out.iter_mut().zip(scale_wrench(&obs[..6])) {
        *o = v;
    }
    out
}

/// Rows of `[features, unit action]`.
pub fn concat_rows(x: ArrayView2<'_, f64>, a: ArrayView2<'_, f64>) -> Array2<f64> {
    ndarray::concatenate(ndarray::Axis(1), &[x, a]).expect("same row count")
}

pub fn stack<const N: usize>(rows: impl Iterator<Item = [f64; N]>) -> Array2<f64> {
    let flat: Vec<f64> = rows.flat_map(|r| r.into_iter()).collect();
    let n = flat.len() / N;
    Array2::from_shape_vec((n, N), flat).expect("row-major stack")
}

pub fn unit_actions<'a>(actions: impl Iterator<Item = &'a RLAction>) -> Array2<f64> {
    stack(actions.map(|a| a.to_unit()))
}

pub fn action_from_row(row: &[f64]) -> RLAction {
    RLAction::from_unit([row[0], row[1], row[2], row[3]])
}
