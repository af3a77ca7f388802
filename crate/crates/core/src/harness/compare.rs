use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::logs::{read_csv, write_csv, ArtifactHeader, EnergyRow, EvalRow, TickRow};
use super::run::{episode_file, ENERGY_CSV, EVAL_CSV};
use crate::error::{Error, Result};

pub const TABLE_CSV: &str = "table.csv";
pub const TRAJECTORY_CSV: &str = "energy_trajectory.csv";
pub const TRACE_CSV: &str = "trace.csv";

/// Which episode goes to `trace.csv`. Unset fields pick the first label,
/// its lowest seed and episode 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceSelection {
    pub label: Option<String>,
    pub seed: Option<u64>,
    pub episode: usize,
}

/// One row of `table.csv`. Rates are per 100 episodes; `*_std` is the
/// sample standard deviation across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub seeds: usize,
    pub episodes: usize,
    pub success_mean: f64,
    pub success_std: f64,
    pub force_mean: f64,
    pub force_std: f64,
    pub tank_mean: f64,
    pub tank_std: f64,
    pub flow_mean: f64,
    pub flow_std: f64,
    pub energy_mean: f64,
    pub energy_std: f64,
    pub interventions_mean: f64,
    pub interventions_std: f64,
    pub final_energy_mean: f64,
    pub final_energy_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub label: String,
    pub tick: u64,
    pub mean: f64,
    pub std: f64,
    pub episodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u32,
    pub tick: u64,
    pub k_eig1: f64,
    pub k_eig2: f64,
    pub e: f64,
    pub flow_applied: f64,
    pub alpha: f64,
    pub px: f64,
    pub py: f64,
    pub fx: f64,
    pub fy: f64,
}

#[derive(Debug, Clone)]
struct Run {
    dir: PathBuf,
    header: ArtifactHeader,
    seed: u64,
    evals: Vec<EvalRow>,
}

pub struct CompareReport {
    pub table: Vec<TableRow>,
    pub trace_from: PathBuf,
}

/// Every directory at or below `root` holding an `eval.csv`.
fn discover(root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if root.join(EVAL_CSV).is_file() {
        out.push(root.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for e in entries {
        discover(&e, out)?;
    }
    Ok(())
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn per100(rows: &[EvalRow], f: impl Fn(&EvalRow) -> bool) -> f64 {
    100.0 * rows.iter().filter(|r| f(r)).count() as f64 / rows.len() as f64
}

fn table_row(label: &str, runs: &[&Run]) -> TableRow {
    let stat = |f: &dyn Fn(&[EvalRow]) -> f64| {
        let v: Vec<f64> = runs.iter().map(|r| f(&r.evals)).collect();
        mean_std(&v)
    };
    let (success_mean, success_std) = stat(&|e| per100(e, |r| r.success));
    let (force_mean, force_std) = stat(&|e| per100(e, |r| r.force));
    let (tank_mean, tank_std) = stat(&|e| per100(e, |r| r.tank));
    let (flow_mean, flow_std) = stat(&|e| per100(e, |r| r.flow));
    let (energy_mean, energy_std) = stat(&|e| per100(e, EvalRow::energy_violation));
    let (interventions_mean, interventions_std) =
        stat(&|e| e.iter().map(|r| f64::from(r.interventions)).sum::<f64>() / e.len() as f64);
    let (final_energy_mean, final_energy_std) =
        stat(&|e| e.iter().map(|r| r.final_energy).sum::<f64>() / e.len() as f64);
    TableRow {
        label: label.to_string(),
        seeds: runs.len(),
        episodes: runs.iter().map(|r| r.evals.len()).sum(),
        success_mean,
        success_std,
        force_mean,
        force_std,
        tank_mean,
        tank_std,
        flow_mean,
        flow_std,
        energy_mean,
        energy_std,
        interventions_mean,
        interventions_std,
        final_energy_mean,
        final_energy_std,
    }
}

/// Per-tick mean and std over all episodes of the runs. Episodes that end
/// early keep contributing their final level.
fn trajectory(label: &str, runs: &[&Run]) -> Result<Vec<TrajectoryRow>> {
    let mut episodes: Vec<Vec<(u64, f64)>> = Vec::new();
    for r in runs {
        let (_, rows): (_, Vec<EnergyRow>) = read_csv(&r.dir.join(ENERGY_CSV))?;
        let mut by_ep: BTreeMap<usize, Vec<(u64, f64)>> = BTreeMap::new();
        for row in rows {
            by_ep.entry(row.episode).or_default().push((row.tick, row.e));
        }
        episodes.extend(by_ep.into_values());
    }
    let mut ticks: Vec<u64> = episodes.iter().flatten().map(|&(t, _)| t).collect();
    ticks.sort_unstable();
    ticks.dedup();
    let mut cursor = vec![0usize; episodes.len()];
    let mut out = Vec::with_capacity(ticks.len());
    let mut vals = Vec::with_capacity(episodes.len());
    for &t in &ticks {
        vals.clear();
        for (ep, c) in episodes.iter().zip(cursor.iter_mut()) {
            while *c + 1 < ep.len() && ep[*c + 1].0 <= t {
                *c += 1;
            }
            if ep[*c].0 <= t {
                vals.push(ep[*c].1);
            }
        }
        let (mean, std) = mean_std(&vals);
        out.push(TrajectoryRow {
            label: label.to_string(),
            tick: t,
            mean,
            std,
            episodes: vals.len(),
        });
    }
    Ok(out)
}

fn load_runs(dirs: &[PathBuf]) -> Result<Vec<Run>> {
    let mut found = Vec::new();
    for d in dirs {
        if !d.is_dir() {
            return Err(Error::Compare(format!("{} is not a directory", d.display())));
        }
        let before = found.len();
        discover(d, &mut found)?;
        if found.len() == before {
            return Err(Error::Compare(format!("no evaluated runs under {}", d.display())));
        }
    }
    found.sort();
    found.dedup();
    let mut runs = Vec::new();
    for dir in found {
        let (header, evals): (_, Vec<EvalRow>) = read_csv(&dir.join(EVAL_CSV))?;
        if evals.is_empty() {
            return Err(Error::Compare(format!("{} has no episodes", dir.display())));
        }
        let seed = match header.seeds.as_slice() {
            [s] => *s,
            _ => return Err(Error::Compare(format!("{}: expected one seed", dir.display()))),
        };
        runs.push(Run {
            dir,
            header,
            seed,
            evals,
        });
    }
    Ok(runs)
}

/// Aggregates evaluated runs found under `dirs` into `out`.
///
/// All three outputs are computed before anything is written, so a
/// failure leaves `out` untouched.
pub fn compare(dirs: &[PathBuf], out: &Path, trace: &TraceSelection) -> Result<CompareReport> {
    if dirs.is_empty() {
        return Err(Error::Compare("no run directories given".into()));
    }
    let runs = load_runs(dirs)?;
    let mazes: std::collections::BTreeSet<&str> =
        runs.iter().map(|r| r.header.get("maze").unwrap_or("")).collect();
    if mazes.len() > 1 {
        return Err(Error::Compare(format!(
            "mixed maze ids: {}",
            mazes.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let maze = mazes.into_iter().next().unwrap_or_default().to_string();

    let mut groups: BTreeMap<String, Vec<&Run>> = BTreeMap::new();
    for r in &runs {
        groups.entry(r.header.require("label")?.to_string()).or_default().push(r);
    }
    for (label, g) in groups.iter_mut() {
        g.sort_by_key(|r| r.seed);
        if g.windows(2).any(|w| w[0].seed == w[1].seed) {
            return Err(Error::Compare(format!("{label}: duplicate seed")));
        }
        if g.iter().any(|r| r.header.config_hash != g[0].header.config_hash) {
            return Err(Error::Compare(format!("{label}: runs differ in config")));
        }
    }

    let table: Vec<TableRow> = groups.iter().map(|(l, g)| table_row(l, g)).collect();
    let mut traj = Vec::new();
    for (l, g) in &groups {
        traj.extend(trajectory(l, g)?);
    }

    let (label, group) = match &trace.label {
        Some(l) => groups
            .get_key_value(l)
            .ok_or_else(|| Error::Compare(format!("no runs labelled {l}")))?,
        None => groups.iter().next().expect("at least one run"),
    };
    let run = match trace.seed {
        Some(s) => group
            .iter()
            .find(|r| r.seed == s)
            .ok_or_else(|| Error::Compare(format!("{label} has no seed {s}")))?,
        None => &group[0],
    };
    let trace_from = episode_file(&run.dir, trace.episode);
    if !trace_from.is_file() {
        return Err(Error::Compare(format!("{} does not exist", trace_from.display())));
    }
    let (_, ticks): (_, Vec<TickRow>) = read_csv(&trace_from)?;
    let trace_rows: Vec<TraceRow> = ticks
        .iter()
        .map(|t| TraceRow {
            step: t.step,
            tick: t.tick,
            k_eig1: t.k_eig1,
            k_eig2: t.k_eig2,
            e: t.e,
            flow_applied: t.flow_applied,
            alpha: t.alpha,
            px: t.px,
            py: t.py,
            fx: t.fx,
            fy: t.fy,
        })
        .collect();

    let mut hashes: Vec<&str> = runs.iter().map(|r| r.header.config_hash.as_str()).collect();
    hashes.sort_unstable();
    hashes.dedup();
    let mut seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let h = |a: &str| ArtifactHeader::new(a, &hashes.join("+"), seeds.clone()).with("maze", &maze);

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_csv(&out.join(TABLE_CSV), &h("table"), &table)?;
    write_csv(&out.join(TRAJECTORY_CSV), &h("energy_trajectory"), &traj)?;
    let th = h("trace")
        .with("label", label)
        .with("seed", run.seed)
        .with("episode", trace.episode);
    write_csv(&out.join(TRACE_CSV), &th, &trace_rows)?;
    Ok(CompareReport { table, trace_from })
}
