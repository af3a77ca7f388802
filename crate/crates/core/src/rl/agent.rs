use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::nets::{action_from_row, task_features, Architecture};
use super::safety::SafetyModels;
use super::sac::Sac;
use crate::error::{Error, Result};
use crate::nn::{Mlp, SquashedSample};
use crate::sim::{Observation, RLAction};

/// Which policy produced an executed action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Random,
    Task,
    Recovery,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Random => "random",
            Provenance::Task => "task",
            Provenance::Recovery => "recovery",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    /// Action sent to the environment.
    pub action: RLAction,
    /// Action the task policy proposed.
    pub proposed: RLAction,
    pub provenance: Provenance,
    /// Risk of the proposed action, when a safety critic is present.
    pub risk: Option<f64>,
}

/// Risk-gated action choice. With `rng` the task action is sampled,
/// otherwise the policy mean is used. If the safety critic rates the task
/// action above `eps_risk`, the recovery action is executed instead.
pub fn select_action(
    obs: &Observation,
    actor: &Mlp,
    safety: Option<&SafetyModels>,
    eps_risk: f64,
    rng: Option<&mut dyn RngCore>,
) -> Result<Decision> {
    let x = task_features(&obs.task());
    let head = actor.forward_one(&x)?;
    let unit: [f64; 4] = match rng {
        Some(rng) => {
            let h = ndarray::ArrayView2::from_shape((1, head.len()), &head).expect("row");
            let s = SquashedSample::draw(h, rng);
            std::array::from_fn(|j| s.action[[0, j]])
        }
        None => std::array::from_fn(|j| head[j].tanh()),
    };
    let proposed = action_from_row(&unit);
    let Some(safety) = safety else {
        return Ok(Decision {
            action: proposed,
            proposed,
            provenance: Provenance::Task,
            risk: None,
        });
    };
    let risk = safety.risk_one(obs, &unit)?;
    if risk > eps_risk {
        let rec = safety.recovery_action(obs)?;
        Ok(Decision {
            action: action_from_row(&rec),
            proposed,
            provenance: Provenance::Recovery,
            risk: Some(risk),
        })
    } else {
        Ok(Decision {
            action: proposed,
            proposed,
            provenance: Provenance::Task,
            risk: Some(risk),
        })
    }
}

/// Read-only networks needed to act.
#[derive(Debug, Clone)]
pub struct Policy {
    pub actor: Mlp,
    pub safety: Option<SafetyModels>,
    pub eps_risk: f64,
}

impl Policy {
    pub fn act(&self, obs: &Observation, rng: Option<&mut dyn RngCore>) -> Result<Decision> {
        select_action(obs, &self.actor, self.safety.as_ref(), self.eps_risk, rng)
    }
}

/// Learner state: SAC task policy plus optional safety models.
#[derive(Debug, Clone)]
pub struct Agent {
    pub sac: Sac,
    pub safety: Option<SafetyModels>,
    pub cfg: TrainConfig,
}

impl Agent {
    pub fn new(cfg: &TrainConfig, safety: Option<SafetyModels>, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        Ok(Agent {
            sac: Sac::new(cfg, rng)?,
            safety,
            cfg: cfg.clone(),
        })
    }

    pub fn gated_safety(&self) -> Option<&SafetyModels> {
        if self.cfg.use_safety {
            self.safety.as_ref()
        } else {
            None
        }
    }

    pub fn act(&self, obs: &Observation, rng: Option<&mut dyn RngCore>) -> Result<Decision> {
        select_action(obs, &self.sac.actor, self.gated_safety(), self.cfg.eps_risk, rng)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Decision {
        let a = super::dataset::random_action(rng);
        Decision {
            action: a,
            proposed: a,
            provenance: Provenance::Random,
            risk: None,
        }
    }

    pub fn policy(&self) -> Policy {
        Policy {
            actor: self.sac.actor.clone(),
            safety: self.gated_safety().cloned(),
            eps_risk: self.cfg.eps_risk,
        }
    }

    /// Networks by file stem, in a fixed order.
    pub fn networks(&self) -> Vec<(&'static str, &Mlp)> {
        let mut v = vec![
            (Architecture::Actor.name(), &self.sac.actor),
            ("critic1", &self.sac.critic1),
            ("critic2", &self.sac.critic2),
        ];
        if let Some(s) = &self.safety {
            v.push((Architecture::SafetyCritic.name(), &s.critic));
            v.push((Architecture::Recovery.name(), &s.recovery));
        }
        v
    }

    pub fn check_dims(actor: &Mlp) -> Result<()> {
        let (i, o, head) = Architecture::Actor.io();
        if actor.input_dim() != i || actor.output_dim() != o || actor.head() != head {
            return Err(Error::DimensionMismatch {
                expected: i,
                got: actor.input_dim(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Head;
    use rand::SeedableRng;

    fn constant_critic(value: f64) -> Mlp {
        // single sigmoid unit whose bias sets the risk
        let (i, _, _) = Architecture::SafetyCritic.io();
        let mut p = vec![0.0; i + 1];
        p[i] = (value / (1.0 - value)).ln();
        Mlp::from_parts(vec![i, 1], vec![], Head::Sigmoid, p).unwrap()
    }

    fn models(risk: f64) -> SafetyModels {
        let cfg = TrainConfig {
            hidden: vec![8],
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let recovery = Architecture::Recovery.build(&cfg.hidden, &mut rng).unwrap();
        SafetyModels::from_nets(constant_critic(risk), recovery, &cfg)
    }

    fn actor() -> Mlp {
        Architecture::Actor.build(&[8], &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    fn obs() -> Observation {
        Observation::from_task(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.04, 0.0]).unwrap()
    }

    #[test]
    fn high_risk_switches_to_recovery() {
        let d = select_action(&obs(), &actor(), Some(&models(0.9)), 0.65, None).unwrap();
        assert_eq!(d.provenance, Provenance::Recovery);
        assert!(d.risk.unwrap() > 0.65);
        assert_ne!(d.action, d.proposed);
    }

    #[test]
    fn low_risk_keeps_task_action() {
        let d = select_action(&obs(), &actor(), Some(&models(0.1)), 0.65, None).unwrap();
        assert_eq!(d.provenance, Provenance::Task);
        assert_eq!(d.action, d.proposed);
    }

    #[test]
    fn mean_mode_is_reproducible_and_sampling_is_seeded() {
        let a = actor();
        let x = select_action(&obs(), &a, None, 0.65, None).unwrap();
        let y = select_action(&obs(), &a, None, 0.65, None).unwrap();
        assert_eq!(x, y);
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let s1 = select_action(&obs(), &a, None, 0.65, Some(&mut r1)).unwrap();
        let s2 = select_action(&obs(), &a, None, 0.65, Some(&mut r2)).unwrap();
        assert_eq!(s1, s2);
    }
}
