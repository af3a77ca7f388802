use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learner hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Task discount.
    pub gamma: f64,
    /// Discount of the safety critic.
    pub gamma_safe: f64,
    /// Risk threshold above which the recovery policy takes over.
    pub eps_risk: f64,
    pub lr: f64,
    pub batch_size: usize,
    /// Polyak coefficient for target networks.
    pub tau: f64,
    pub entropy_target: f64,
    pub init_alpha: f64,
    pub replay_capacity: usize,
    /// Hidden layer widths shared by all four networks.
    pub hidden: Vec<usize>,
    pub episodes: usize,
    /// Uniformly random environment steps before the first update.
    pub warmup_steps: usize,
    pub updates_per_step: usize,
    /// Multiplier applied to rewards before the critic sees them.
    pub reward_scale: f64,
    /// Risk-gated action switch during training and evaluation.
    pub use_safety: bool,
    /// Keep updating the safety critic and recovery policy online.
    pub safety_online: bool,
    /// Share of violating transitions in safety-critic batches, when available.
    pub violation_fraction: f64,
    /// Offline tuples to collect.
    pub collect_tuples: usize,
    /// Random steps per offline rollout.
    pub collect_horizon: usize,
    /// Gradient steps of offline safety pretraining.
    pub pretrain_steps: usize,
    /// Share of the offline dataset held out for evaluation.
    pub holdout_fraction: f64,
    /// Episodes between checkpoints; 0 saves only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.9,
            gamma_safe: 0.85,
            eps_risk: 0.65,
            lr: 3e-4,
            batch_size: 256,
            tau: 0.005,
            entropy_target: -4.0,
            init_alpha: 0.2,
            replay_capacity: 1_000_000,
            hidden: vec![256, 256],
            episodes: 2000,
            warmup_steps: 1000,
            updates_per_step: 1,
            reward_scale: 0.01,
            use_safety: true,
            safety_online: true,
            violation_fraction: 0.5,
            collect_tuples: 40_000,
            collect_horizon: 1,
            pretrain_steps: 5000,
            holdout_fraction: 0.2,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// Smaller networks and batches for runs on a single CPU core.
    pub fn desk() -> Self {
        TrainConfig {
            hidden: vec![64, 64],
            batch_size: 128,
            lr: 1e-3,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit_open = |name: &'static str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{v} must lie in (0, 1)")))
            }
        };
        unit_open("gamma", self.gamma)?;
        unit_open("gamma_safe", self.gamma_safe)?;
        unit_open("eps_risk", self.eps_risk)?;
        unit_open("tau", self.tau)?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr", "must be positive"));
        }
        if !(self.init_alpha > 0.0) || !(self.reward_scale > 0.0) {
            return Err(Error::invalid("init_alpha", "temperature and reward scale must be positive"));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(Error::invalid("batch_size", "must be > 0 and fit the replay buffer"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::invalid("hidden", "need at least one non-empty hidden layer"));
        }
        if !(0.0..=1.0).contains(&self.violation_fraction) || !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::invalid("violation_fraction", "fractions must lie in [0, 1]"));
        }
        if self.collect_horizon == 0 {
            return Err(Error::invalid("collect_horizon", "must be > 0"));
        }
        Ok(())
    }
}
