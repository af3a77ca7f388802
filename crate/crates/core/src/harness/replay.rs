use std::path::Path;
use std::sync::Arc;

use super::config::ExperimentConfig;
use super::logs::{read_csv, tick_rows, ArtifactHeader, TickRow};
use crate::error::{Error, Result};
use crate::rl::StepTrace;
use crate::sim::{MazeEnv, MazeSpec, RLAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayReport {
    pub steps: usize,
    pub ticks: usize,
}

fn csv_fields(row: &TickRow) -> Result<Vec<String>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.serialize(row)?;
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))?;
    Ok(text.trim_end().split(',').map(str::to_string).collect())
}

const COLUMNS: [&str; 24] = [
    "step", "tick", "a_dx", "a_dy", "a_k1", "a_k2", "provenance", "px", "py", "vx", "vy", "fx", "fy", "k_eig1",
    "k_eig2", "e", "flow_raw", "flow_applied", "alpha", "depleted", "reward", "force", "tank", "flow",
];

/// Re-runs a logged episode from its reset seed and logged actions and
/// checks that every logged tick matches bitwise.
pub fn replay_episode(path: &Path) -> Result<ReplayReport> {
    let (header, logged): (ArtifactHeader, Vec<TickRow>) = read_csv(path)?;
    if header.artifact != "episode" {
        return Err(Error::Config(format!("{}: not an episode trace", path.display())));
    }
    let cfg: ExperimentConfig = serde_json::from_str(header.require("config")?)?;
    let spec = MazeSpec::from_json(header.require("maze_spec")?)?;
    let seed: u64 = header
        .require("reset_seed")?
        .parse()
        .map_err(|_| Error::Config("reset_seed is not an integer".into()))?;

    let mut env = MazeEnv::new(Arc::new(spec), cfg.sim, cfg.run.clone())?;
    env.reset(seed)?;
    let mut steps: Vec<StepTrace> = Vec::new();
    let mut i = 0;
    while i < logged.len() {
        let first = &logged[i];
        let n = logged[i..].iter().take_while(|r| r.step == first.step).count();
        let action = RLAction::new(first.a_dx, first.a_dy, first.a_k1, first.a_k2);
        let mut ticks = Vec::new();
        let out = env.step_traced(&action, &mut ticks)?;
        steps.push(StepTrace {
            action,
            provenance: first.provenance,
            reward: out.reward,
            ticks,
        });
        i += n;
        if out.done && i < logged.len() {
            return Err(Error::ReplayMismatch {
                line: data_line(&header, i),
                detail: "episode ended before the log".into(),
            });
        }
    }
    let replayed = tick_rows(&steps);
    for (k, (a, b)) in logged.iter().zip(&replayed).enumerate() {
        let (fa, fb) = (csv_fields(a)?, csv_fields(b)?);
        if let Some(c) = (0..fa.len()).find(|&c| fa[c] != fb[c]) {
            return Err(Error::ReplayMismatch {
                line: data_line(&header, k),
                detail: format!("{}: logged {} replayed {}", COLUMNS[c], fa[c], fb[c]),
            });
        }
    }
    if replayed.len() != logged.len() {
        return Err(Error::ReplayMismatch {
            line: data_line(&header, logged.len().min(replayed.len())),
            detail: format!("logged {} ticks, replay produced {}", logged.len(), replayed.len()),
        });
    }
    Ok(ReplayReport {
        steps: steps.len(),
        ticks: replayed.len(),
    })
}

/// 1-based file line of data row `k`.
fn data_line(header: &ArtifactHeader, k: usize) -> usize {
    1 + header.meta.len() + 1 + k + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::{episode_file, eval_run};
    use crate::sim::SimParams;
    use std::fs;

    fn recorded(layer: bool) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.run = cfg.run.with_maze("s-maze").with_layer(layer).with_seed(9);
        cfg.run.constraints = "Eb6-Ef5".parse().unwrap();
        cfg.sim = SimParams {
            max_steps: 40,
            ..SimParams::default()
        };
        cfg.eval.episodes = 1;
        eval_run(&cfg, None, dir.path()).unwrap();
        let p = episode_file(dir.path(), 0);
        (dir, p)
    }

    #[test]
    fn logged_episode_replays_exactly() {
        for layer in [false, true] {
            let (_d, p) = recorded(layer);
            let r = replay_episode(&p).unwrap();
            assert!(r.steps > 0);
            assert!(r.ticks >= r.steps && r.ticks <= r.steps * 100);
        }
    }

    #[test]
    fn tampered_energy_is_caught_with_its_line() {
        let (_d, p) = recorded(true);
        let text = fs::read_to_string(&p).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let header_rows = lines.iter().take_while(|l| l.starts_with('#')).count();
        let target = header_rows + 1 + 5;
        let cols: Vec<&str> = lines[header_rows].split(',').collect();
        let e_col = cols.iter().position(|c| *c == "e").unwrap();
        let mut fields: Vec<String> = lines[target].split(',').map(str::to_string).collect();
        let v: f64 = fields[e_col].parse().unwrap();
        fields[e_col] = f64::from_bits(v.to_bits() + 1).to_string();
        lines[target] = fields.join(",");
        fs::write(&p, lines.join("\n") + "\n").unwrap();
        match replay_episode(&p) {
            Err(Error::ReplayMismatch { line, detail }) => {
                assert_eq!(line, target + 1);
                assert!(detail.starts_with("e:"), "{detail}");
            }
            other => panic!("{other:?}"),
        }
    }
}
