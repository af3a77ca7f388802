use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rl::{EpisodeLog, EvalEpisode, Provenance, StepTrace};

/// Leading `#` lines of every emitted CSV.
///
/// The first line is always
/// `# tankguard artifact=<kind> config_hash=<hash> seeds=<s1,s2,...>`;
/// further lines are `# key=value`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArtifactHeader {
    pub artifact: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub meta: Vec<(String, String)>,
}

impl ArtifactHeader {
    pub fn new(artifact: &str, config_hash: &str, seeds: Vec<u64>) -> Self {
        ArtifactHeader {
            artifact: artifact.to_string(),
            config_hash: config_hash.to_string(),
            seeds,
            meta: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("{} header lacks `{key}`", self.artifact)))
    }

    pub fn render(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let mut s = format!(
            "# tankguard artifact={} config_hash={} seeds={}\n",
            self.artifact,
            self.config_hash,
            seeds.join(",")
        );
        for (k, v) in &self.meta {
            debug_assert!(!v.contains('\n'));
            s.push_str(&format!("# {k}={v}\n"));
        }
        s
    }

    /// Splits `text` into its header and the CSV body.
    pub fn parse(text: &str) -> Result<(ArtifactHeader, &str)> {
        let bad = |m: &str| Error::Config(format!("artifact header: {m}"));
        let mut rest = text;
        let mut lines = Vec::new();
        while let Some(line) = rest.strip_prefix('#') {
            let end = line.find('\n').map_or(line.len(), |i| i + 1);
            lines.push(line[..end].trim());
            rest = &line[end..];
        }
        let first = lines.first().ok_or_else(|| bad("missing"))?;
        let mut h = ArtifactHeader::default();
        let mut fields = first.split_whitespace();
        if fields.next() != Some("tankguard") {
            return Err(bad("not a tankguard artifact"));
        }
        for f in fields {
            let (k, v) = f.split_once('=').ok_or_else(|| bad(f))?;
            match k {
                "artifact" => h.artifact = v.to_string(),
                "config_hash" => h.config_hash = v.to_string(),
                "seeds" => {
                    h.seeds = v
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse().map_err(|_| bad("seed list")))
                        .collect::<Result<_>>()?;
                }
                _ => return Err(bad(k)),
            }
        }
        for line in &lines[1..] {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(line))?;
            h.meta.push((k.trim().to_string(), v.to_string()));
        }
        Ok((h, rest))
    }
}

pub fn write_csv<T: Serialize>(path: &Path, header: &ArtifactHeader, rows: &[T]) -> Result<()> {
    let mut buf = header.render().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<(ArtifactHeader, Vec<T>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (header, body) = ArtifactHeader::parse(&text)?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok((header, rows))
}

/// One row of `train_log.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub episode: usize,
    pub steps: u32,
    pub reward: f64,
    pub success: bool,
    pub force: bool,
    pub tank: bool,
    pub flow: bool,
    pub truncated: bool,
    pub energy_spent: f64,
    pub final_energy: f64,
    pub interventions: u32,
}

impl From<&EpisodeLog> for TrainRow {
    fn from(l: &EpisodeLog) -> Self {
        TrainRow {
            episode: l.episode,
            steps: l.steps,
            reward: l.reward,
            success: l.success,
            force: l.force,
            tank: l.tank,
            flow: l.flow,
            truncated: l.truncated,
            energy_spent: l.energy_spent,
            final_energy: l.final_energy,
            interventions: l.interventions,
        }
    }
}

/// Wall-clock time per episode, kept apart from the deterministic log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub episode: usize,
    pub wall_clock_s: f64,
}

/// One row of `eval.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub episode: usize,
    pub seed: u64,
    pub steps: u32,
    pub reward: f64,
    pub success: bool,
    pub force: bool,
    pub tank: bool,
    pub flow: bool,
    pub interventions: u32,
    pub final_energy: f64,
    pub min_energy: f64,
    pub max_energy: f64,
    pub min_applied_flow: f64,
}

impl From<&EvalEpisode> for EvalRow {
    fn from(e: &EvalEpisode) -> Self {
        EvalRow {
            episode: e.episode,
            seed: e.seed,
            steps: e.steps,
            reward: e.reward,
            success: e.success,
            force: e.violations.force,
            tank: e.violations.tank,
            flow: e.violations.flow,
            interventions: e.interventions,
            final_energy: e.final_energy,
            min_energy: e.min_energy,
            max_energy: e.max_energy,
            min_applied_flow: e.min_applied_flow,
        }
    }
}

impl EvalRow {
    pub fn energy_violation(&self) -> bool {
        self.tank || self.flow
    }
}

/// One row of `energy.csv`: tank level after a control tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub episode: usize,
    pub tick: u64,
    pub e: f64,
}

/// One control tick of an episode trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRow {
    pub step: u32,
    pub tick: u64,
    pub a_dx: f64,
    pub a_dy: f64,
    pub a_k1: f64,
    pub a_k2: f64,
    pub provenance: Provenance,
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
    pub fx: f64,
    pub fy: f64,
    pub k_eig1: f64,
    pub k_eig2: f64,
    pub e: f64,
    pub flow_raw: f64,
    pub flow_applied: f64,
    pub alpha: f64,
    pub depleted: bool,
    /// Reward of the step this tick belongs to.
    pub reward: f64,
    pub force: bool,
    pub tank: bool,
    pub flow: bool,
}

/// Flattens recorded steps into per-tick rows.
pub fn tick_rows(steps: &[StepTrace]) -> Vec<TickRow> {
    let mut rows = Vec::new();
    for s in steps {
        for t in &s.ticks {
            rows.push(TickRow {
                step: t.step,
                tick: t.tick,
                a_dx: s.action.dp[0],
                a_dy: s.action.dp[1],
                a_k1: s.action.k1,
                a_k2: s.action.k2,
                provenance: s.provenance,
                px: t.p.x,
                py: t.p.y,
                vx: t.v.x,
                vy: t.v.y,
                fx: t.sensed.f.x,
                fy: t.sensed.f.y,
                k_eig1: t.k_eig[0],
                k_eig2: t.k_eig[1],
                e: t.tank.e,
                flow_raw: t.tank.last_flow_raw,
                flow_applied: t.tank.last_flow_applied,
                alpha: t.tank.alpha,
                depleted: t.tank.depleted,
                reward: s.reward,
                force: t.violations.force,
                tank: t.violations.tank,
                flow: t.violations.flow,
            });
        }
    }
    rows
}
