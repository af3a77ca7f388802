use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checkpoint::{load_safety, save_checkpoint, save_safety};
use super::config::ExperimentConfig;
use super::logs::{tick_rows, write_csv, ArtifactHeader, EnergyRow, EvalRow, TimingRow, TrainRow};
use crate::error::{Error, Result};
use crate::rl::{
    collect_offline, evaluate, pretrain_safety, record_episode, train, Dataset, EvalSummary, Evaluated, Policy,
};
use crate::sim::MazeSpec;

pub const DATASET_FILE: &str = "dataset.bin";
pub const COLLECT_CSV: &str = "collect.csv";
pub const PRETRAIN_CSV: &str = "pretrain.csv";
pub const TRAIN_CSV: &str = "train_log.csv";
pub const TIMING_CSV: &str = "timing.csv";
pub const EVAL_CSV: &str = "eval.csv";
pub const ENERGY_CSV: &str = "energy.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const PERIODIC_DIR: &str = "checkpoints";
pub const EPISODE_DIR: &str = "episodes";

pub fn episode_file(dir: &Path, episode: usize) -> PathBuf {
    dir.join(EPISODE_DIR).join(format!("episode-{episode:04}.csv"))
}

fn header(artifact: &str, cfg: &ExperimentConfig) -> ArtifactHeader {
    ArtifactHeader::new(artifact, &cfg.hash(), vec![cfg.run.seed])
        .with("label", cfg.label())
        .with("maze", &cfg.run.maze)
}

fn maze(cfg: &ExperimentConfig) -> Result<Arc<MazeSpec>> {
    let spec = MazeSpec::resolve(&cfg.run.maze)?;
    spec.validate(cfg.sim.ee_radius)?;
    Ok(Arc::new(spec))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectRow {
    pub tuples: usize,
    pub violations: usize,
    pub violation_rate: f64,
    pub force: usize,
    pub tank: usize,
    pub flow: usize,
}

/// Collects the offline dataset into `dir`.
pub fn collect(cfg: &ExperimentConfig, dir: &Path) -> Result<Dataset> {
    cfg.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let data = collect_offline(
        maze(cfg)?,
        cfg.sim,
        &cfg.run,
        cfg.train.collect_tuples,
        cfg.train.collect_horizon,
        cfg.run.seed,
    )?;
    data.save(&dir.join(DATASET_FILE))?;
    let count = |f: fn(&crate::sim::Violations) -> bool| data.transitions.iter().filter(|t| f(&t.mask)).count();
    let row = CollectRow {
        tuples: data.len(),
        violations: data.violation_count(),
        violation_rate: data.violation_rate(),
        force: count(|m| m.force),
        tank: count(|m| m.tank),
        flow: count(|m| m.flow),
    };
    write_csv(&dir.join(COLLECT_CSV), &header("collect", cfg), &[row])?;
    cfg.save(&dir.join(super::checkpoint::CONFIG_FILE))?;
    Ok(data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainRow {
    pub train_size: usize,
    pub holdout_size: usize,
    pub violations: usize,
    pub holdout_auc: Option<f64>,
}

/// Pretrains the safety critic and recovery policy on `dataset`.
pub fn pretrain(cfg: &ExperimentConfig, dataset: &Path, dir: &Path) -> Result<PretrainRow> {
    cfg.validate()?;
    let data = Dataset::load(dataset)?;
    let report = pretrain_safety(&data, &cfg.train, cfg.run.seed)?;
    save_safety(dir, &report.models, cfg)?;
    let row = PretrainRow {
        train_size: report.train_size,
        holdout_size: report.holdout_size,
        violations: report.violations,
        holdout_auc: report.holdout_auc,
    };
    let h = header("pretrain", cfg).with("dataset_maze", &data.meta.maze);
    write_csv(&dir.join(PRETRAIN_CSV), &h, &[row])?;
    Ok(row)
}

/// Trains a policy. Safety models come from `safety_dir` when the config
/// asks for them.
pub fn train_run(cfg: &ExperimentConfig, safety_dir: Option<&Path>, dir: &Path) -> Result<Vec<TrainRow>> {
    cfg.validate()?;
    let safety = match (cfg.train.use_safety, safety_dir) {
        (true, Some(d)) => Some(
            load_safety(d, cfg)?
                .ok_or_else(|| Error::Config(format!("{}: no safety models found", d.display())))?,
        ),
        (true, None) => {
            return Err(Error::Config("use_safety needs pretrained safety models".into()));
        }
        (false, _) => None,
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut timing = Vec::new();
    let mut clock = Instant::now();
    let every = cfg.train.checkpoint_every;
    let result = train(maze(cfg)?, cfg.sim, &cfg.run, &cfg.train, safety, |row, agent| {
        timing.push(TimingRow {
            episode: row.episode,
            wall_clock_s: clock.elapsed().as_secs_f64(),
        });
        clock = Instant::now();
        if every > 0 && (row.episode + 1) % every == 0 && row.episode + 1 < cfg.train.episodes {
            let d = dir.join(PERIODIC_DIR).join(format!("episode-{:04}", row.episode + 1));
            save_checkpoint(&d, agent, cfg)?;
        }
        Ok(())
    })?;
    save_checkpoint(&dir.join(CHECKPOINT_DIR), &result.agent, cfg)?;
    let rows: Vec<TrainRow> = result.log.iter().map(TrainRow::from).collect();
    write_csv(&dir.join(TRAIN_CSV), &header("train_log", cfg), &rows)?;
    write_csv(&dir.join(TIMING_CSV), &header("timing", cfg), &timing)?;
    Ok(rows)
}

/// Evaluates `policy` (random actions if `None`) under `cfg.run`.
pub fn eval_run(cfg: &ExperimentConfig, policy: Option<Policy>, dir: &Path) -> Result<EvalSummary> {
    cfg.validate()?;
    let spec = maze(cfg)?;
    let kind = if policy.is_some() { "checkpoint" } else { "random" };
    let what = policy.map_or(Evaluated::Random, Evaluated::Policy);
    let summary = evaluate(&what, spec.clone(), cfg.sim, &cfg.run, cfg.eval.episodes, true)?;
    fs::create_dir_all(dir.join(EPISODE_DIR)).map_err(|e| Error::io(dir, e))?;

    let h = |a: &str| header(a, cfg).with("policy", kind);
    let rows: Vec<EvalRow> = summary.episodes.iter().map(EvalRow::from).collect();
    write_csv(&dir.join(EVAL_CSV), &h("eval"), &rows)?;

    let stride = cfg.eval.energy_stride;
    let mut energy = Vec::new();
    for ep in &summary.episodes {
        let last = ep.energy_trace.len().saturating_sub(1);
        for (i, &e) in ep.energy_trace.iter().enumerate() {
            let tick = i as u64 + 1;
            if tick % stride == 0 || i == last {
                energy.push(EnergyRow {
                    episode: ep.episode,
                    tick,
                    e,
                });
            }
        }
    }
    write_csv(&dir.join(ENERGY_CSV), &h("energy").with("stride", stride), &energy)?;

    let config_json = serde_json::to_string(cfg)?;
    let maze_json = serde_json::to_string(&*spec)?;
    for i in 0..cfg.eval.trace_episodes.min(cfg.eval.episodes) {
        let (ep, steps) = record_episode(&what, spec.clone(), cfg.sim, &cfg.run, i)?;
        let eh = h("episode")
            .with("episode", i)
            .with("reset_seed", ep.seed)
            .with("config", &config_json)
            .with("maze_spec", &maze_json);
        write_csv(&episode_file(dir, i), &eh, &tick_rows(&steps))?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::checkpoint::load_policy;
    use crate::harness::logs::read_csv;
    use crate::rl::TrainConfig;
    use crate::sim::SimParams;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.run.maze = "corridor".into();
        c.run.seed = 3;
        c.sim = SimParams {
            max_steps: 20,
            ..SimParams::default()
        };
        c.train = TrainConfig {
            hidden: vec![8],
            batch_size: 16,
            episodes: 4,
            warmup_steps: 20,
            replay_capacity: 1000,
            collect_tuples: 300,
            pretrain_steps: 20,
            checkpoint_every: 2,
            ..TrainConfig::default()
        };
        c.eval.episodes = 3;
        c.eval.trace_episodes = 2;
        c
    }

    #[test]
    fn pipeline_writes_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let mut cfg = tiny();
        let data = collect(&cfg, &d.join("collect")).unwrap();
        assert_eq!(data.len(), 300);
        let p = pretrain(&cfg, &d.join("collect").join(DATASET_FILE), &d.join("safety")).unwrap();
        assert_eq!(p.train_size + p.holdout_size, 300);

        cfg.train.use_safety = true;
        assert!(train_run(&cfg, None, &d.join("bad")).is_err());
        let rows = train_run(&cfg, Some(&d.join("safety")), &d.join("train")).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(d.join("train/checkpoints/episode-0002/actor.tgw").exists());
        assert!(!d.join("train/checkpoints/episode-0004").exists());
        let (logged_h, logged): (_, Vec<TrainRow>) = read_csv(&d.join("train").join(TRAIN_CSV)).unwrap();
        assert_eq!(logged, rows);
        assert_eq!(logged_h.config_hash, cfg.hash());

        let (policy, _) = load_policy(&d.join("train").join(CHECKPOINT_DIR)).unwrap();
        assert!(policy.safety.is_some());
        let s = eval_run(&cfg, Some(policy), &d.join("eval")).unwrap();
        let (h, evals): (_, Vec<EvalRow>) = read_csv(&d.join("eval").join(EVAL_CSV)).unwrap();
        assert_eq!(evals.len(), 3);
        assert_eq!(h.get("policy"), Some("checkpoint"));
        assert_eq!(evals[1].final_energy, s.episodes[1].final_energy);
        assert!(episode_file(&d.join("eval"), 1).exists());
        assert!(!episode_file(&d.join("eval"), 2).exists());
    }

    #[test]
    fn energy_rows_follow_stride_and_keep_last_tick() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny();
        cfg.eval.energy_stride = 7;
        let s = eval_run(&cfg, None, dir.path()).unwrap();
        let (_, rows): (_, Vec<EnergyRow>) = read_csv(&dir.path().join(ENERGY_CSV)).unwrap();
        for ep in &s.episodes {
            let mine: Vec<_> = rows.iter().filter(|r| r.episode == ep.episode).collect();
            let last = mine.last().unwrap();
            assert_eq!(last.tick as usize, ep.energy_trace.len());
            assert_eq!(last.e, ep.final_energy);
            assert!(mine[..mine.len() - 1].iter().all(|r| r.tick % 7 == 0));
        }
    }
}
