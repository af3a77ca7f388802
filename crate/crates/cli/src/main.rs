use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tankguard::harness::{
    self, load_policy, output_root, prepare_output, ExperimentConfig, TraceSelection, CHECKPOINT_DIR,
};
use tankguard::{ConstraintSet, Error, MazeSpec, Result};

/// Passivity-aware safe RL on a planar contact-rich maze.
#[derive(Parser, Debug)]
#[command(name = "tankguard", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Experiment config file (TOML). Unset keys take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory. Defaults to `$TANKGUARD_OUT/<command>/<label>/seed-<seed>`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Built-in maze id or path to a maze JSON file.
    #[arg(long, global = true)]
    maze: Option<String>,
    #[arg(long, global = true, value_enum)]
    layer: Option<OnOff>,
    /// agnostic, Eb<b> or Eb<b>-Ef<f>.
    #[arg(long = "run-config", global = true, value_name = "LABEL")]
    run_config: Option<ConstraintSet>,
    /// Replace existing output.
    #[arg(long, global = true)]
    overwrite: bool,
    /// Worker threads; 1 runs everything on one thread.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Random-action rollouts into an offline dataset.
    Collect,
    /// Offline pretraining of the safety critic and recovery policy.
    Pretrain {
        /// Dataset written by `collect`.
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Online training.
    Train {
        /// Directory with pretrained safety models.
        #[arg(long)]
        safety: Option<PathBuf>,
    },
    /// Deterministic evaluation rollouts.
    Eval {
        /// Checkpoint directory (or a train output holding `checkpoint/`).
        /// Random actions without one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Re-run a logged episode and check it bitwise.
    Replay { episode: PathBuf },
    /// Aggregate evaluated runs into table, trajectory and trace CSVs.
    Compare {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        trace_label: Option<String>,
        #[arg(long)]
        trace_seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        trace_episode: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Collect => "collect",
            Command::Pretrain { .. } => "pretrain",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Replay { .. } => "replay",
            Command::Compare { .. } => "compare",
        }
    }
}

fn build_config(g: &Global, base: Option<ExperimentConfig>) -> Result<ExperimentConfig> {
    let mut cfg = match (&g.config, base) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(b)) => b,
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.run.seed = s;
    }
    if let Some(m) = &g.maze {
        cfg.run.maze = m.clone();
    }
    if let Some(l) = g.layer {
        cfg.run.layer = matches!(l, OnOff::On);
    }
    if let Some(r) = g.run_config {
        cfg.run.constraints = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(g: &Global, command: &str, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = match &g.out {
        Some(d) => d.clone(),
        None => output_root(None)
            .join(command)
            .join(cfg.label())
            .join(format!("seed-{}", cfg.run.seed)),
    };
    prepare_output(&dir, g.overwrite)?;
    Ok(dir)
}

fn checkpoint_dir(p: &Path) -> PathBuf {
    let nested = p.join(CHECKPOINT_DIR);
    if nested.is_dir() {
        nested
    } else {
        p.to_path_buf()
    }
}

fn run(cli: Cli) -> Result<String> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let name = cli.command.name();
    match &cli.command {
        Command::Collect => {
            let cfg = build_config(g, None)?;
            MazeSpec::resolve(&cfg.run.maze)?;
            let dir = out_dir(g, name, &cfg)?;
            let d = harness::collect(&cfg, &dir)?;
            Ok(format!(
                "collected {} tuples, {} violating ({:.2}%) into {}",
                d.len(),
                d.violation_count(),
                100.0 * d.violation_rate(),
                dir.display()
            ))
        }
        Command::Pretrain { dataset } => {
            let cfg = build_config(g, None)?;
            let dir = out_dir(g, name, &cfg)?;
            let r = harness::pretrain(&cfg, dataset, &dir)?;
            let auc = r.holdout_auc.map_or("n/a".to_string(), |a| format!("{a:.4}"));
            Ok(format!("pretrained on {} tuples, held-out AUC {auc}, saved to {}", r.train_size, dir.display()))
        }
        Command::Train { safety } => {
            let cfg = build_config(g, None)?;
            MazeSpec::resolve(&cfg.run.maze)?;
            let dir = out_dir(g, name, &cfg)?;
            let rows = harness::train_run(&cfg, safety.as_deref(), &dir)?;
            let tail = &rows[rows.len().saturating_sub(100)..];
            let succ = tail.iter().filter(|r| r.success).count();
            Ok(format!(
                "trained {} episodes, {succ}/{} successes in the last {}, saved to {}",
                rows.len(),
                tail.len(),
                tail.len(),
                dir.display()
            ))
        }
        Command::Eval { checkpoint, episodes } => {
            let (policy, base) = match checkpoint {
                Some(p) => {
                    let (pol, c) = load_policy(&checkpoint_dir(p))?;
                    (Some(pol), Some(c))
                }
                None => (None, None),
            };
            let mut cfg = build_config(g, base)?;
            if let Some(n) = episodes {
                cfg.eval.episodes = *n;
                cfg.validate()?;
            }
            let dir = out_dir(g, name, &cfg)?;
            let s = harness::eval_run(&cfg, policy, &dir)?;
            Ok(format!(
                "{} episodes: {} successes, {} force, {} tank, {} flow violations, mean final energy {:.4} J, written to {}",
                s.count(),
                s.successes(),
                s.force_violations(),
                s.tank_violations(),
                s.flow_violations(),
                s.mean_final_energy(),
                dir.display()
            ))
        }
        Command::Replay { episode } => {
            let r = harness::replay_episode(episode)?;
            Ok(format!("replay ok: {} steps, {} ticks match bitwise", r.steps, r.ticks))
        }
        Command::Compare {
            runs,
            trace_label,
            trace_seed,
            trace_episode,
        } => {
            let out = g.out.clone().unwrap_or_else(|| output_root(None).join("compare"));
            if out.exists() && std::fs::read_dir(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?.next().is_some() && !g.overwrite {
                return Err(Error::WouldOverwrite(out));
            }
            let sel = TraceSelection {
                label: trace_label.clone(),
                seed: *trace_seed,
                episode: *trace_episode,
            };
            let r = harness::compare(runs, &out, &sel)?;
            let mut msg = format!("{} configs compared into {}", r.table.len(), out.display());
            for row in &r.table {
                msg.push_str(&format!(
                    "\n{}: success {:.1} ± {:.1}, energy violations {:.1} ± {:.1}, final energy {:.3} ± {:.3}",
                    row.label,
                    row.success_mean,
                    row.success_std,
                    row.energy_mean,
                    row.energy_std,
                    row.final_energy_mean,
                    row.final_energy_std
                ));
            }
            Ok(msg)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error kind={} msg={msg}", e.kind());
            let usage = matches!(e, Error::Config(_) | Error::InvalidParameter { .. });
            if usage {
                eprintln!("run `tankguard --help` for usage");
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
