//! Offline transition datasets.
//!
//! Binary layout (little-endian, canonical):
//!
//! ```text
//! magic     4 bytes "TGDS"
//! version   u32
//! meta_len  u32, followed by a JSON metadata object
//! count     u64
//! records   count × (u32 length, payload)
//! payload   s[9] a[4] r s_next[9] as f64, flags u8
//!           (bit 0 done, 1 force, 2 tank, 3 flow)
//! ```
//!
//! The JSONL form has the metadata object on the first line and one
//! transition object per following line.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::Transition;
use crate::config::RunConfig;
use crate::control::Vec2;
use crate::error::{Error, Result};
use crate::sim::{MazeEnv, MazeSpec, RLAction, SimParams, Violations};

pub const DATASET_MAGIC: &[u8; 4] = b"TGDS";
pub const DATASET_VERSION: u32 = 1;
const RECORD_LEN: u32 = 23 * 8 + 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: u32,
    pub maze: String,
    pub constraints: String,
    pub seed: u64,
    pub count: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub transitions: Vec<Transition>,
}

impl Dataset {
    pub fn new(maze: &str, constraints: &str, seed: u64, transitions: Vec<Transition>) -> Self {
        Dataset {
            meta: DatasetMeta {
                version: DATASET_VERSION,
                maze: maze.to_string(),
                constraints: constraints.to_string(),
                seed,
                count: transitions.len(),
                violations: transitions.iter().filter(|t| t.mask.any()).count(),
            },
            transitions,
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn violation_count(&self) -> usize {
        self.meta.violations
    }

    pub fn violation_rate(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.meta.violations as f64 / self.len() as f64
        }
    }

    /// Deterministic shuffle-free split: every `k`-th tuple goes to the held-out part.
    pub fn split(&self, holdout_fraction: f64) -> (Vec<Transition>, Vec<Transition>) {
        if holdout_fraction <= 0.0 {
            return (self.transitions.clone(), Vec::new());
        }
        let every = (1.0 / holdout_fraction).round().max(2.0) as usize;
        let mut train = Vec::new();
        let mut held = Vec::new();
        for (i, t) in self.transitions.iter().enumerate() {
            if i % every == every - 1 {
                held.push(*t);
            } else {
                train.push(*t);
            }
        }
        (train, held)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let meta = serde_json::to_vec(&self.meta)?;
        let mut buf = Vec::with_capacity(16 + meta.len() + self.len() * (RECORD_LEN as usize + 4));
        buf.extend_from_slice(DATASET_MAGIC);
        buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        buf.extend_from_slice(&meta);
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for t in &self.transitions {
            buf.extend_from_slice(&RECORD_LEN.to_le_bytes());
            let a = [t.a.dp[0], t.a.dp[1], t.a.k1, t.a.k2];
            for v in t.s.iter().chain(&a).chain([&t.r]).chain(&t.s_next) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.push(flags(t));
        }
        w.write_all(&buf).map_err(|e| Error::io("<dataset>", e))
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Dataset> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io("<dataset>", e))?;
        let mut c = Cursor { b: &bytes, pos: 0 };
        if c.take(4)? != DATASET_MAGIC {
            return Err(Error::DatasetFormat("bad magic".into()));
        }
        let version = c.u32()?;
        if version != DATASET_VERSION {
            return Err(Error::DatasetFormat(format!("version {version} unsupported")));
        }
        let meta_len = c.u32()? as usize;
        let meta: DatasetMeta = serde_json::from_slice(c.take(meta_len)?)?;
        let count = c.u64()? as usize;
        if count != meta.count {
            return Err(Error::DatasetFormat(format!(
                "record count {count} disagrees with metadata {}",
                meta.count
            )));
        }
        let mut transitions = Vec::with_capacity(count.min(1 << 24));
        for i in 0..count {
            let len = c.u32()?;
            if len != RECORD_LEN {
                return Err(Error::DatasetFormat(format!("record {i}: length {len}")));
            }
            let mut f = [0.0; 23];
            for v in &mut f {
                *v = c.f64()?;
            }
            let fl = c.take(1)?[0];
            let mut s = [0.0; 9];
            let mut s_next = [0.0; 9];
            s.copy_from_slice(&f[..9]);
            s_next.copy_from_slice(&f[14..]);
            transitions.push(Transition {
                s,
                a: RLAction::new(f[9], f[10], f[11], f[12]),
                r: f[13],
                s_next,
                done: fl & 1 != 0,
                mask: Violations {
                    force: fl & 2 != 0,
                    tank: fl & 4 != 0,
                    flow: fl & 8 != 0,
                },
            });
        }
        if c.pos != bytes.len() {
            return Err(Error::DatasetFormat("trailing bytes".into()));
        }
        Ok(Dataset { meta, transitions })
    }

    pub fn write_jsonl<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        let io = |e| Error::io("<dataset>", e);
        serde_json::to_writer(&mut w, &self.meta)?;
        w.write_all(b"\n").map_err(io)?;
        for t in &self.transitions {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_jsonl<R: Read>(r: R) -> Result<Dataset> {
        let mut lines = BufReader::new(r).lines();
        let head = lines
            .next()
            .ok_or_else(|| Error::DatasetFormat("empty file".into()))?
            .map_err(|e| Error::io("<dataset>", e))?;
        let meta: DatasetMeta = serde_json::from_str(&head)?;
        if meta.version != DATASET_VERSION {
            return Err(Error::DatasetFormat(format!("version {} unsupported", meta.version)));
        }
        let mut transitions = Vec::with_capacity(meta.count);
        for line in lines {
            let line = line.map_err(|e| Error::io("<dataset>", e))?;
            if !line.trim().is_empty() {
                transitions.push(serde_json::from_str(&line)?);
            }
        }
        if transitions.len() != meta.count {
            return Err(Error::DatasetFormat(format!(
                "{} records, metadata says {}",
                transitions.len(),
                meta.count
            )));
        }
        Ok(Dataset { meta, transitions })
    }

    /// Writes the binary form, or JSONL when the extension is `.jsonl`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        if is_jsonl(path) {
            self.write_jsonl(f)
        } else {
            self.write_binary(BufWriter::new(f))
        }
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        if is_jsonl(path) {
            Self::read_jsonl(f)
        } else {
            Self::read_binary(BufReader::new(f))
        }
    }
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "jsonl")
}

fn flags(t: &Transition) -> u8 {
    u8::from(t.done) | u8::from(t.mask.force) << 1 | u8::from(t.mask.tank) << 2 | u8::from(t.mask.flow) << 3
}

struct Cursor<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.b.len() - self.pos < n {
            return Err(Error::DatasetFormat(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Uniformly random action.
pub fn random_action<R: Rng + ?Sized>(rng: &mut R) -> RLAction {
    RLAction::from_unit(std::array::from_fn(|_| rng.random_range(-1.0..=1.0)))
}

/// Random rollouts of `horizon` steps from the maze spawn points (start
/// pose if there are none), cycling through them, until `n` tuples exist.
pub fn collect_offline(
    spec: Arc<MazeSpec>,
    params: SimParams,
    run: &RunConfig,
    n: usize,
    horizon: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 || horizon == 0 {
        return Err(Error::invalid("collect", "tuple count and horizon must be > 0"));
    }
    let spawns: Vec<Vec2> = if spec.spawns.is_empty() {
        vec![spec.start()]
    } else {
        spec.spawns.iter().map(|&s| Vec2::from(s)).collect()
    };
    let maze = spec.name.clone();
    let mut env = MazeEnv::new(spec, params, run.clone().with_seed(seed))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut rollout: u64 = 0;
    while out.len() < n {
        let pose = spawns[rollout as usize % spawns.len()];
        let mut obs = env.reset_at(pose, seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(rollout))?;
        rollout += 1;
        for _ in 0..horizon {
            let a = random_action(&mut rng);
            let step = env.step(&a)?;
            let terminal = step.info.success || step.info.violations.any();
            out.push(Transition::new(&obs, a.clipped().0, step.reward, &step.observation, terminal, step.info.violations));
            obs = step.observation;
            if step.done || out.len() == n {
                break;
            }
        }
    }
    Ok(Dataset::new(&maze, &run.constraints.to_string(), seed, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{DiscObstacle, Rect};

    fn small(seed: u64) -> Dataset {
        let spec = Arc::new(MazeSpec::builtin("s-maze").unwrap());
        collect_offline(spec, SimParams::default(), &RunConfig::default(), 200, 10, seed).unwrap()
    }

    #[test]
    fn collection_is_reproducible() {
        let spec = Arc::new(MazeSpec::builtin("corridor").unwrap());
        let a = collect_offline(spec.clone(), SimParams::default(), &RunConfig::default(), 10, 5, 3).unwrap();
        let b = collect_offline(spec, SimParams::default(), &RunConfig::default(), 10, 5, 3).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a, b);
    }

    #[test]
    fn masks_imply_done() {
        let d = small(1);
        assert_eq!(d.len(), 200);
        for t in &d.transitions {
            if t.mask.any() {
                assert!(t.done);
            }
        }
    }

    #[test]
    fn far_from_walls_is_violation_free() {
        let spec = MazeSpec {
            schema: 1,
            name: "box".into(),
            walls: vec![
                Rect { min: [-0.1, -0.1], max: [1.1, 0.0] },
                Rect { min: [-0.1, 1.0], max: [1.1, 1.1] },
                Rect { min: [-0.1, 0.0], max: [0.0, 1.0] },
                Rect { min: [1.0, 0.0], max: [1.1, 1.0] },
            ],
            obstacles: Vec::<DiscObstacle>::new(),
            start: [0.5, 0.5],
            goal: [0.9, 0.9],
            goal_radius: 0.02,
            spawns: vec![[0.3, 0.3], [0.5, 0.5], [0.7, 0.3]],
        };
        let d = collect_offline(Arc::new(spec), SimParams::default(), &RunConfig::default(), 2000, 3, 0).unwrap();
        assert_eq!(d.violation_count(), 0);
    }

    #[test]
    fn binary_round_trip_is_bitwise() {
        let d = small(2);
        let mut bytes = Vec::new();
        d.write_binary(&mut bytes).unwrap();
        let back = Dataset::read_binary(&bytes[..]).unwrap();
        assert_eq!(back, d);
        for (x, y) in d.transitions.iter().zip(&back.transitions) {
            assert_eq!(x.r.to_bits(), y.r.to_bits());
        }
        assert!(Dataset::read_binary(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn jsonl_round_trip_is_bitwise() {
        let d = small(4);
        let mut text = Vec::new();
        d.write_jsonl(&mut text).unwrap();
        let back = Dataset::read_jsonl(&text[..]).unwrap();
        assert_eq!(back, d);
        let all_bits = |ds: &Dataset| -> Vec<u64> {
            ds.transitions
                .iter()
                .flat_map(|t| t.s.iter().chain(&t.s_next).chain([&t.r, &t.a.k1]).map(|v| v.to_bits()).collect::<Vec<_>>())
                .collect()
        };
        assert_eq!(all_bits(&back), all_bits(&d));
    }

    #[test]
    fn split_is_disjoint_and_complete() {
        let d = small(5);
        let (tr, ho) = d.split(0.2);
        assert_eq!(tr.len() + ho.len(), d.len());
        assert_eq!(ho.len(), 40);
    }
}
