use std::fs;
use std::path::Path;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::rl::{Agent, Architecture, Policy, SafetyModels};

pub const WEIGHT_EXT: &str = "tgw";
pub const CONFIG_FILE: &str = "config.toml";

fn weight_path(dir: &Path, stem: &str) -> std::path::PathBuf {
    dir.join(format!("{stem}.{WEIGHT_EXT}"))
}

fn check_arch(net: &Mlp, arch: Architecture) -> Result<()> {
    let (i, o, head) = arch.io();
    if net.input_dim() != i {
        return Err(Error::DimensionMismatch {
            expected: i,
            got: net.input_dim(),
        });
    }
    if net.output_dim() != o {
        return Err(Error::DimensionMismatch {
            expected: o,
            got: net.output_dim(),
        });
    }
    if net.head() != head {
        return Err(Error::WeightFormat(format!("{} has the wrong output head", arch.name())));
    }
    Ok(())
}

fn load_net(dir: &Path, arch: Architecture) -> Result<Mlp> {
    let net = Mlp::load(&weight_path(dir, arch.name()))?;
    check_arch(&net, arch)?;
    Ok(net)
}

/// Writes all networks of `agent` and the config snapshot into `dir`.
pub fn save_checkpoint(dir: &Path, agent: &Agent, cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (stem, net) in agent.networks() {
        net.save(&weight_path(dir, stem))?;
    }
    cfg.save(&dir.join(CONFIG_FILE))
}

/// Writes the safety critic and recovery policy into `dir`.
pub fn save_safety(dir: &Path, models: &SafetyModels, cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    models.critic.save(&weight_path(dir, Architecture::SafetyCritic.name()))?;
    models.recovery.save(&weight_path(dir, Architecture::Recovery.name()))?;
    cfg.save(&dir.join(CONFIG_FILE))
}

/// Safety models from a checkpoint or pretraining directory, or `None` if
/// the directory holds neither network.
pub fn load_safety(dir: &Path, cfg: &ExperimentConfig) -> Result<Option<SafetyModels>> {
    let c = weight_path(dir, Architecture::SafetyCritic.name());
    let r = weight_path(dir, Architecture::Recovery.name());
    match (c.exists(), r.exists()) {
        (false, false) => Ok(None),
        (true, true) => {
            let critic = load_net(dir, Architecture::SafetyCritic)?;
            let recovery = load_net(dir, Architecture::Recovery)?;
            Ok(Some(SafetyModels::from_nets(critic, recovery, &cfg.train)))
        }
        _ => Err(Error::WeightFormat(format!(
            "{}: safety critic and recovery policy must come together",
            dir.display()
        ))),
    }
}

/// Acting networks and the config they were trained with.
pub fn load_policy(dir: &Path) -> Result<(Policy, ExperimentConfig)> {
    let cfg = ExperimentConfig::load(&dir.join(CONFIG_FILE))?;
    let actor = load_net(dir, Architecture::Actor)?;
    for stem in ["critic1", "critic2"] {
        let p = weight_path(dir, stem);
        if p.exists() {
            check_arch(&Mlp::load(&p)?, Architecture::Critic)?;
        }
    }
    let safety = if cfg.train.use_safety {
        load_safety(dir, &cfg)?
    } else {
        None
    };
    Ok((
        Policy {
            actor,
            safety,
            eps_risk: cfg.train.eps_risk,
        },
        cfg,
    ))
}
