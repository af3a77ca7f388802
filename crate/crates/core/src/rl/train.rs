use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{Agent, Provenance};
use super::buffer::{ReplayBuffer, Transition};
use super::config::TrainConfig;
use super::safety::SafetyModels;
use crate::config::RunConfig;
use crate::error::Result;
use crate::sim::{MazeEnv, MazeSpec, SimParams};

/// Per-purpose random streams derived from one seed.
pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Reset seed of episode `i` of a run seeded with `seed`.
pub fn episode_seed(seed: u64, i: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STREAM_INIT: u64 = 1;
const STREAM_ACT: u64 = 2;
const STREAM_UPDATE: u64 = 3;

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub steps: u32,
    pub reward: f64,
    pub success: bool,
    pub force: bool,
    pub tank: bool,
    pub flow: bool,
    pub truncated: bool,
    /// Energy drawn from the tank over the episode, J.
    pub energy_spent: f64,
    pub final_energy: f64,
    /// Steps where the recovery policy acted.
    pub interventions: u32,
}

pub struct TrainResult {
    pub agent: Agent,
    pub log: Vec<EpisodeLog>,
}

/// Episodic online training. `on_episode` sees every finished episode and
/// the agent right after it.
pub fn train(
    spec: Arc<MazeSpec>,
    params: SimParams,
    run: &RunConfig,
    cfg: &TrainConfig,
    safety: Option<SafetyModels>,
    mut on_episode: impl FnMut(&EpisodeLog, &Agent) -> Result<()>,
) -> Result<TrainResult> {
    cfg.validate()?;
    let mut init_rng = stream(run.seed, STREAM_INIT);
    let mut act_rng = stream(run.seed, STREAM_ACT);
    let mut upd_rng = stream(run.seed, STREAM_UPDATE);
    let mut agent = Agent::new(cfg, safety, &mut init_rng)?;
    let mut env = MazeEnv::new(spec, params, run.clone())?;
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let mut safety_replay = ReplayBuffer::new(cfg.replay_capacity);
    let mut total_steps = 0usize;
    let mut log = Vec::with_capacity(cfg.episodes);

    for ep in 0..cfg.episodes {
        let mut obs = env.reset(episode_seed(run.seed, ep as u64))?;
        let mut row = EpisodeLog {
            episode: ep,
            steps: 0,
            reward: 0.0,
            success: false,
            force: false,
            tank: false,
            flow: false,
            truncated: false,
            energy_spent: 0.0,
            final_energy: env.state().tank.e,
            interventions: 0,
        };
        loop {
            let decision = if total_steps < cfg.warmup_steps {
                Agent::random(&mut act_rng)
            } else {
                agent.act(&obs, Some(&mut act_rng))?
            };
            let out = env.step(&decision.action)?;
            total_steps += 1;
            let terminal = out.info.success || out.info.violations.any();
            let v = out.info.violations;
            replay.push(Transition::new(&obs, decision.proposed.clipped().0, out.reward, &out.observation, terminal, v));
            if agent.safety.is_some() && cfg.safety_online {
                safety_replay.push(Transition::new(&obs, decision.action.clipped().0, out.reward, &out.observation, terminal, v));
            }

            row.steps += 1;
            row.reward += out.reward;
            row.energy_spent += out.info.energy_drawn;
            row.interventions += u32::from(decision.provenance == Provenance::Recovery);
            obs = out.observation;

            if total_steps >= cfg.warmup_steps && replay.len() >= cfg.batch_size {
                for _ in 0..cfg.updates_per_step {
                    let batch = replay.sample(cfg.batch_size, &mut upd_rng);
                    agent.sac.update(&batch, &mut upd_rng)?;
                    if cfg.safety_online && safety_replay.len() >= cfg.batch_size {
                        if let Some(s) = agent.safety.as_mut() {
                            let b = safety_replay.sample_safety(cfg.batch_size, cfg.violation_fraction, &mut upd_rng);
                            s.update(&b)?;
                        }
                    }
                }
            }

            if out.done {
                row.success = out.info.success;
                row.force = v.force;
                row.tank = v.tank;
                row.flow = v.flow;
                row.truncated = out.info.truncated;
                break;
            }
        }
        row.final_energy = env.state().tank.e;
        on_episode(&row, &agent)?;
        log.push(row);
    }
    Ok(TrainResult { agent, log })
}

/// Collected offline data plus pretrained safety models and held-out AUC.
pub struct PretrainReport {
    pub models: SafetyModels,
    pub holdout_auc: Option<f64>,
    pub train_size: usize,
    pub holdout_size: usize,
    pub violations: usize,
}

/// Offline safety pretraining on a dataset.
pub fn pretrain_safety(data: &super::dataset::Dataset, cfg: &TrainConfig, seed: u64) -> Result<PretrainReport> {
    cfg.validate()?;
    let mut init_rng = stream(seed, STREAM_INIT + 10);
    let mut rng = stream(seed, STREAM_UPDATE + 10);
    let (train, held) = data.split(cfg.holdout_fraction);
    let mut buf = ReplayBuffer::new(train.len().max(1));
    buf.extend(train.iter().copied());
    let mut models = SafetyModels::new(cfg, &mut init_rng)?;
    if !buf.is_empty() {
        models.pretrain(&buf, cfg, cfg.pretrain_steps, &mut rng)?;
    }
    let holdout_auc = if held.is_empty() {
        None
    } else {
        let scores = models.score(&held)?;
        let labels: Vec<bool> = held.iter().map(|t| t.mask.any()).collect();
        super::safety::auc(&scores, &labels)
    };
    Ok(PretrainReport {
        models,
        holdout_auc,
        train_size: train.len(),
        holdout_size: held.len(),
        violations: data.violation_count(),
    })
}
