use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "TANKGUARD_OUT";

/// Output root: `explicit`, else `$TANKGUARD_OUT`, else `runs`.
pub fn output_root(explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from("runs"),
    }
}

/// Creates `dir` for fresh output. An existing non-empty directory is an
/// error unless `overwrite` is set, in which case it is cleared first.
pub fn prepare_output(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .next()
            .is_some();
        if non_empty {
            if !overwrite {
                return Err(Error::WouldOverwrite(dir.to_path_buf()));
            }
            fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// A grid of configs × seeds with a fixed directory layout
/// `<out>/<label>/seed-<seed>`. Each config's own seed is replaced by the
/// plan's seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub configs: Vec<ExperimentConfig>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Parallel workers; 1 runs everything on the calling thread.
    pub max_workers: usize,
    pub overwrite: bool,
}

impl ExperimentPlan {
    pub fn new(configs: Vec<ExperimentConfig>, seeds: Vec<u64>, out: PathBuf) -> Self {
        ExperimentPlan {
            configs,
            seeds,
            out,
            max_workers: 1,
            overwrite: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.configs.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("plan needs at least one config and one seed".into()));
        }
        if self.max_workers == 0 {
            return Err(Error::invalid("max_workers", "must be > 0"));
        }
        let mut seen = HashSet::new();
        for c in self.pairs() {
            c.validate()?;
            if !seen.insert((c.label(), c.run.seed)) {
                return Err(Error::Config(format!("duplicate run {} seed {}", c.label(), c.run.seed)));
            }
        }
        Ok(())
    }

    /// Every (config, seed) pair as a config carrying that seed.
    pub fn pairs(&self) -> Vec<ExperimentConfig> {
        self.configs
            .iter()
            .flat_map(|c| {
                self.seeds.iter().map(move |&s| {
                    let mut c = c.clone();
                    c.run.seed = s;
                    c
                })
            })
            .collect()
    }

    pub fn run_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out.join(cfg.label()).join(format!("seed-{}", cfg.run.seed))
    }

    /// Validates the plan and creates every run directory, refusing to
    /// touch existing results unless `overwrite` is set.
    pub fn prepare(&self) -> Result<Vec<(ExperimentConfig, PathBuf)>> {
        self.validate()?;
        let dirs: Vec<_> = self
            .pairs()
            .into_iter()
            .map(|c| {
                let d = self.run_dir(&c);
                (c, d)
            })
            .collect();
        if !self.overwrite {
            for (_, d) in &dirs {
                if d.exists() && fs::read_dir(d).map_err(|e| Error::io(d, e))?.next().is_some() {
                    return Err(Error::WouldOverwrite(d.clone()));
                }
            }
        }
        for (_, d) in &dirs {
            prepare_output(d, self.overwrite)?;
        }
        Ok(dirs)
    }

    /// Runs `job` for every pair on up to `max_workers` threads. Results are
    /// returned in plan order whatever the thread count.
    pub fn execute<T, F>(&self, job: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&ExperimentConfig, &Path) -> Result<T> + Sync,
    {
        use rayon::prelude::*;
        let dirs = self.prepare()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.max_workers)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| {
            dirs.par_iter()
                .map(|(c, d)| job(c, d))
                .collect::<Result<Vec<_>>>()
        })
    }
}
