use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::Vec2;
use crate::error::{Error, Result};

pub const MAZE_SCHEMA: u32 = 1;

const CORRIDOR: &str = include_str!("../../mazes/corridor.json");
const ARENA: &str = include_str!("../../mazes/arena.json");
const S_MAZE: &str = include_str!("../../mazes/s_maze.json");

/// Axis-aligned wall block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x.clamp(self.min[0], self.max[0]), p.y.clamp(self.min[1], self.max[1]))
    }

    pub fn contains(&self, p: Vec2) -> bool {
        (self.min[0]..=self.max[0]).contains(&p.x) && (self.min[1]..=self.max[1]).contains(&p.y)
    }
}

/// Movable disc on the maze floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscObstacle {
    pub center: [f64; 2],
    pub radius: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MazeSpec {
    pub schema: u32,
    pub name: String,
    pub walls: Vec<Rect>,
    #[serde(default)]
    pub obstacles: Vec<DiscObstacle>,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub goal_radius: f64,
    /// Poses used to seed offline data collection.
    #[serde(default)]
    pub spawns: Vec<[f64; 2]>,
}

impl MazeSpec {
    pub fn builtin_ids() -> &'static [&'static str] {
        &["corridor", "s-maze", "arena"]
    }

    pub fn builtin(id: &str) -> Option<MazeSpec> {
        let text = match id {
            "corridor" => CORRIDOR,
            "arena" => ARENA,
            "s-maze" | "s_maze" => S_MAZE,
            _ => return None,
        };
        Some(serde_json::from_str(text).expect("built-in maze parses"))
    }

    /// Built-in id or a path to a JSON maze file.
    pub fn resolve(id_or_path: &str) -> Result<MazeSpec> {
        if let Some(m) = Self::builtin(id_or_path) {
            return Ok(m);
        }
        Self::load(Path::new(id_or_path))
    }

    pub fn load(path: &Path) -> Result<MazeSpec> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<MazeSpec> {
        let spec: MazeSpec = serde_json::from_str(text)?;
        if spec.schema != MAZE_SCHEMA {
            return Err(Error::InvalidMaze(format!(
                "schema {} unsupported (expected {MAZE_SCHEMA})",
                spec.schema
            )));
        }
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("maze serializes")
    }

    pub fn start(&self) -> Vec2 {
        Vec2::from(self.start)
    }

    pub fn goal(&self) -> Vec2 {
        Vec2::from(self.goal)
    }

    /// Distance from `p` to the nearest wall surface (0 inside a wall).
    pub fn wall_clearance(&self, p: Vec2) -> f64 {
        self.walls
            .iter()
            .map(|w| (p - w.closest_point(p)).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// True if a disc of `radius` at `p` touches no wall and no obstacle.
    pub fn is_free(&self, p: Vec2, radius: f64) -> bool {
        self.wall_clearance(p) >= radius
            && self
                .obstacles
                .iter()
                .all(|o| (p - Vec2::from(o.center)).norm() >= radius + o.radius)
    }

    pub fn validate(&self, ee_radius: f64) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        for w in &self.walls {
            if !finite(&w.min) || !finite(&w.max) || w.min[0] > w.max[0] || w.min[1] > w.max[1] {
                return Err(Error::InvalidMaze(format!("degenerate wall {w:?}")));
            }
        }
        for o in &self.obstacles {
            if !finite(&o.center) || !(o.radius > 0.0) || !(o.mass > 0.0) {
                return Err(Error::InvalidMaze(format!("bad obstacle {o:?}")));
            }
        }
        if !(self.goal_radius > 0.0 && self.goal_radius.is_finite()) {
            return Err(Error::InvalidMaze("goal_radius must be positive".into()));
        }
        if !finite(&self.start) || !self.is_free(self.start(), ee_radius) {
            return Err(Error::InvalidMaze("start is not in free space".into()));
        }
        if !finite(&self.goal) || !self.is_free(self.goal(), ee_radius) {
            return Err(Error::InvalidMaze("goal is not in free space".into()));
        }
        for s in &self.spawns {
            if !self.is_free(Vec2::from(*s), ee_radius) {
                return Err(Error::InvalidMaze(format!("spawn {s:?} is not in free space")));
            }
        }
        Ok(())
    }
}
