//! The samples under `docs/samples` are regenerated here and must match byte
//! for byte, except wall-clock timings.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tankguard::harness::{
    load_policy, read_csv, replay_episode, CollectRow, EnergyRow, EvalRow, ExperimentConfig, PretrainRow, TableRow,
    TickRow, TimingRow, TrainRow, TraceRow, TrajectoryRow,
};
use tankguard::nn::Mlp;
use tankguard::rl::Dataset;
use tankguard::MazeSpec;

fn samples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/samples")
}

fn run(args: &[&str]) {
    let o = Command::new(env!("CARGO_BIN_EXE_tankguard"))
        .args(args)
        .env_remove("TANKGUARD_OUT")
        .output()
        .unwrap();
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn samples_regenerate_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path();
    let p = |s: &str| t.join(s).to_str().unwrap().to_string();
    let cfg = samples().join("pipeline.toml");
    let cfg = cfg.to_str().unwrap();
    run(&["--config", cfg, "--seed", "3", "--out", &p("collect"), "collect"]);
    run(&["--config", cfg, "--seed", "3", "--out", &p("pretrain"), "pretrain", "--dataset", &p("collect/dataset.bin")]);
    run(&["--config", cfg, "--seed", "3", "--out", &p("train"), "train", "--safety", &p("pretrain")]);
    run(&["--seed", "3", "--layer", "on", "--out", &p("eval"), "eval", "--checkpoint", &p("train")]);
    run(&["--out", &p("compare"), "compare", &p("eval")]);

    let generated = files(t);
    let expected: Vec<PathBuf> = files(&samples())
        .into_iter()
        .filter(|f| !matches!(f.to_str(), Some("pipeline.toml" | "corridor.json")))
        .collect();
    assert_eq!(generated, expected);
    for f in &generated {
        if f.ends_with("timing.csv") {
            continue;
        }
        assert!(fs::read(t.join(f)).unwrap() == fs::read(samples().join(f)).unwrap(), "{} differs", f.display());
    }
}

#[test]
fn samples_parse_with_the_public_readers() {
    let s = samples();
    let cfg = ExperimentConfig::load(&s.join("train/checkpoint/config.toml")).unwrap();
    let (h, rows): (_, Vec<TrainRow>) = read_csv(&s.join("train/train_log.csv")).unwrap();
    assert_eq!((h.config_hash.as_str(), h.seeds.as_slice()), (cfg.hash().as_str(), &[3u64][..]));
    assert_eq!(rows.len(), cfg.train.episodes);
    read_csv::<TimingRow>(&s.join("train/timing.csv")).unwrap();
    read_csv::<CollectRow>(&s.join("collect/collect.csv")).unwrap();
    read_csv::<PretrainRow>(&s.join("pretrain/pretrain.csv")).unwrap();
    let (_, eval): (_, Vec<EvalRow>) = read_csv(&s.join("eval/eval.csv")).unwrap();
    assert_eq!(eval.len(), 2);
    read_csv::<EnergyRow>(&s.join("eval/energy.csv")).unwrap();
    read_csv::<TickRow>(&s.join("eval/episodes/episode-0000.csv")).unwrap();
    read_csv::<TableRow>(&s.join("compare/table.csv")).unwrap();
    read_csv::<TrajectoryRow>(&s.join("compare/energy_trajectory.csv")).unwrap();
    read_csv::<TraceRow>(&s.join("compare/trace.csv")).unwrap();

    let data = Dataset::load(&s.join("collect/dataset.bin")).unwrap();
    assert_eq!(data.len(), cfg.train.collect_tuples);
    let (policy, _) = load_policy(&s.join("train/checkpoint")).unwrap();
    assert!(policy.safety.is_some());
    assert_eq!(Mlp::load(&s.join("pretrain/recovery.tgw")).unwrap().output_dim(), 8);
    assert_eq!(MazeSpec::load(&s.join("corridor.json")).unwrap(), MazeSpec::builtin("corridor").unwrap());

    let r = replay_episode(&s.join("eval/episodes/episode-0000.csv")).unwrap();
    assert_eq!(r.ticks, 20);
}
