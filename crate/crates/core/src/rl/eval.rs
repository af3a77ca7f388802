use std::sync::Arc;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::agent::{Policy, Provenance};
use super::dataset::random_action;
use super::train::{episode_seed, stream};
use crate::config::RunConfig;
use crate::error::Result;
use crate::sim::{MazeEnv, MazeSpec, RLAction, SimParams, TickRecord, Violations};

/// What drives the evaluation rollouts.
#[derive(Debug, Clone)]
pub enum Evaluated {
    /// Deterministic (policy mean) rollouts of a trained policy.
    Policy(Policy),
    /// Uniformly random actions.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub episode: usize,
    pub seed: u64,
    pub steps: u32,
    pub reward: f64,
    pub success: bool,
    pub violations: Violations,
    pub interventions: u32,
    pub final_energy: f64,
    /// Extremes over every control tick.
    pub min_energy: f64,
    pub max_energy: f64,
    pub min_applied_flow: f64,
    /// Tank energy after each control tick, if requested.
    #[serde(skip)]
    pub energy_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: Vec<EvalEpisode>,
}

impl EvalSummary {
    pub fn count(&self) -> usize {
        self.episodes.len()
    }

    pub fn successes(&self) -> usize {
        self.episodes.iter().filter(|e| e.success).count()
    }

    pub fn force_violations(&self) -> usize {
        self.episodes.iter().filter(|e| e.violations.force).count()
    }

    pub fn tank_violations(&self) -> usize {
        self.episodes.iter().filter(|e| e.violations.tank).count()
    }

    pub fn flow_violations(&self) -> usize {
        self.episodes.iter().filter(|e| e.violations.flow).count()
    }

    /// Episodes that ended on a tank or flow violation.
    pub fn energy_violations(&self) -> usize {
        self.episodes.iter().filter(|e| e.violations.energy()).count()
    }

    pub fn interventions(&self) -> u64 {
        self.episodes.iter().map(|e| u64::from(e.interventions)).sum()
    }

    pub fn mean_final_energy(&self) -> f64 {
        self.episodes.iter().map(|e| e.final_energy).sum::<f64>() / self.count().max(1) as f64
    }
}

/// One decision step of a recorded episode.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    /// Action as sent to the environment, before clipping.
    pub action: RLAction,
    pub provenance: Provenance,
    pub reward: f64,
    pub ticks: Vec<TickRecord>,
}

fn rollout(
    what: &Evaluated,
    spec: &Arc<MazeSpec>,
    params: &SimParams,
    run: &RunConfig,
    episode: usize,
    keep_trace: bool,
    mut steps: Option<&mut Vec<StepTrace>>,
) -> Result<EvalEpisode> {
    let seed = episode_seed(run.seed, episode as u64);
    let mut env = MazeEnv::new(spec.clone(), *params, run.clone())?;
    let mut obs = env.reset(seed)?;
    let mut rng = stream(seed, 4);
    let e0 = env.state().tank.e;
    let mut ep = EvalEpisode {
        episode,
        seed,
        steps: 0,
        reward: 0.0,
        success: false,
        violations: Violations::default(),
        interventions: 0,
        final_energy: e0,
        min_energy: e0,
        max_energy: e0,
        min_applied_flow: 0.0,
        energy_trace: Vec::new(),
    };
    let mut ticks: Vec<TickRecord> = Vec::new();
    loop {
        let (action, provenance) = match what {
            Evaluated::Random => (random_action(&mut rng), Provenance::Random),
            Evaluated::Policy(p) => {
                let d = p.act(&obs, None::<&mut dyn RngCore>)?;
                ep.interventions += u32::from(d.provenance == Provenance::Recovery);
                (d.action, d.provenance)
            }
        };
        ticks.clear();
        let out = env.step_traced(&action, &mut ticks)?;
        for t in &ticks {
            ep.min_energy = ep.min_energy.min(t.tank.e);
            ep.max_energy = ep.max_energy.max(t.tank.e);
            ep.min_applied_flow = ep.min_applied_flow.min(t.tank.last_flow_applied);
            if keep_trace {
                ep.energy_trace.push(t.tank.e);
            }
        }
        if let Some(st) = steps.as_deref_mut() {
            st.push(StepTrace {
                action,
                provenance,
                reward: out.reward,
                ticks: ticks.clone(),
            });
        }
        ep.steps += 1;
        ep.reward += out.reward;
        obs = out.observation;
        if out.done {
            ep.success = out.info.success;
            ep.violations = out.info.violations;
            break;
        }
    }
    ep.final_energy = env.state().tank.e;
    Ok(ep)
}

/// Rollouts of `episodes` episodes; episode `i` resets with
/// `episode_seed(run.seed, i)`. Episodes run in parallel and the result
/// does not depend on the thread count.
pub fn evaluate(
    what: &Evaluated,
    spec: Arc<MazeSpec>,
    params: SimParams,
    run: &RunConfig,
    episodes: usize,
    keep_trace: bool,
) -> Result<EvalSummary> {
    let episodes = (0..episodes)
        .into_par_iter()
        .map(|i| rollout(what, &spec, &params, run, i, keep_trace, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary { episodes })
}

/// Episode `episode` of [`evaluate`] again, with every step and tick.
pub fn record_episode(
    what: &Evaluated,
    spec: Arc<MazeSpec>,
    params: SimParams,
    run: &RunConfig,
    episode: usize,
) -> Result<(EvalEpisode, Vec<StepTrace>)> {
    let mut steps = Vec::new();
    let ep = rollout(what, &spec, &params, run, episode, true, Some(&mut steps))?;
    Ok((ep, steps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_evaluation_is_reproducible() {
        let spec = Arc::new(MazeSpec::builtin("s-maze").unwrap());
        let run = RunConfig::new("Eb6-Ef5".parse().unwrap()).with_seed(3);
        let a = evaluate(&Evaluated::Random, spec.clone(), SimParams::default(), &run, 8, true).unwrap();
        let b = evaluate(&Evaluated::Random, spec, SimParams::default(), &run, 8, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.episodes.iter().map(|e| e.energy_trace.clone()).collect::<Vec<_>>(),
            b.episodes.iter().map(|e| e.energy_trace.clone()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn recorded_episode_matches_evaluation() {
        let spec = Arc::new(MazeSpec::builtin("corridor").unwrap());
        let run = RunConfig::new("Eb6-Ef5".parse().unwrap()).with_seed(5);
        let s = evaluate(&Evaluated::Random, spec.clone(), SimParams::default(), &run, 3, true).unwrap();
        let (ep, steps) = record_episode(&Evaluated::Random, spec, SimParams::default(), &run, 2).unwrap();
        assert_eq!(ep, s.episodes[2]);
        assert_eq!(steps.len() as u32, ep.steps);
        let energy: Vec<f64> = steps.iter().flat_map(|s| s.ticks.iter().map(|t| t.tank.e)).collect();
        assert_eq!(energy, ep.energy_trace);
    }

    #[test]
    fn layer_on_means_no_energy_violations() {
        let spec = Arc::new(MazeSpec::builtin("s-maze").unwrap());
        let run = RunConfig::new("Eb6-Ef5".parse().unwrap()).with_layer(true).with_seed(1);
        let s = evaluate(&Evaluated::Random, spec, SimParams::default(), &run, 16, false).unwrap();
        assert_eq!(s.energy_violations(), 0);
        for e in &s.episodes {
            assert!(e.min_energy >= 0.0 && e.max_energy <= 6.0);
            assert!(e.min_applied_flow >= -0.5);
        }
    }
}
