use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::rl::TrainConfig;
use crate::sim::SimParams;

/// Evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Episodes whose full per-tick trace is written.
    pub trace_episodes: usize,
    /// Every n-th tick of each episode goes to `energy.csv`; the last tick
    /// is always kept.
    pub energy_stride: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes: 100,
            trace_episodes: 1,
            energy_stride: 10,
        }
    }
}

/// Everything that defines an experiment, as stored in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub sim: SimParams,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        self.sim.validate()?;
        self.train.validate()?;
        if self.eval.energy_stride == 0 {
            return Err(Error::invalid("energy_stride", "must be > 0"));
        }
        if self.run.seed > i64::MAX as u64 {
            return Err(Error::invalid("seed", "must fit in a signed 64-bit integer"));
        }
        Ok(())
    }

    /// Short SHA-256 of the config with the seed zeroed, so runs that differ
    /// only by seed share a hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.seed = 0;
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Run label with the layer state, e.g. `Eb4` or `Eb4+layer`.
    pub fn label(&self) -> String {
        if self.run.layer {
            format!("{}+layer", self.run.constraints)
        } else {
            self.run.constraints.to_string()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = ExperimentConfig::default();
        let text = c.to_toml();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
        assert_eq!(c.train.gamma, 0.9);
        assert_eq!(c.run.tank.e_max, 6.0);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = ExperimentConfig::from_toml("[run]\nconstraints = \"Eb8-Ef7\"\nseed = 3\n[train]\nepisodes = 5\n").unwrap();
        assert_eq!(c.run.tank_config().flow_min, -0.7);
        assert_eq!(c.train.episodes, 5);
        assert_eq!(c.train.lr, 3e-4);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml("[train]\nepisodez = 5\n").is_err());
        assert!(ExperimentConfig::from_toml("[train]\ngamma = 1.5\n").is_err());
        assert!(ExperimentConfig::from_toml("[run]\nconstraints = \"Eb\"\n").is_err());
        assert!(ExperimentConfig::from_toml("not toml").is_err());
    }

    #[test]
    fn hash_ignores_seed_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.run.seed = 9;
        assert_eq!(a.hash(), b.hash());
        b.train.episodes += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
