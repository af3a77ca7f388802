//! Unilateral penalty contact between discs and axis-aligned walls.
//!
//! Normal force magnitude is `max(0, k δ + c δ̇)` along the outward normal,
//! with `δ` the penetration depth. There is no friction.

use serde::{Deserialize, Serialize};

use super::maze::{MazeSpec, Rect};
use crate::control::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    /// Penalty stiffness, N/m.
    pub stiffness: f64,
    /// Normal damping, N·s/m.
    pub damping: f64,
}

/// Moving disc state used for obstacles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleState {
    pub p: Vec2,
    pub v: Vec2,
    pub radius: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactForces {
    /// Net contact force on the end-effector.
    pub on_ee: Vec2,
    /// Force each obstacle exerts on the end-effector.
    pub ee_from_obstacle: Vec<Vec2>,
    /// Net contact force on each obstacle (end-effector, walls, other obstacles).
    pub on_obstacle: Vec<Vec2>,
}

fn penalty(normal: Vec2, depth: f64, v_rel: Vec2, params: &ContactParams) -> Vec2 {
    let rate = -v_rel.dot(&normal);
    normal * (params.stiffness * depth + params.damping * rate).max(0.0)
}

/// Force a wall exerts on a disc, if they overlap.
pub fn wall_contact(p: Vec2, v: Vec2, radius: f64, wall: &Rect, params: &ContactParams) -> Option<Vec2> {
    let q = wall.closest_point(p);
    let d = p - q;
    let dist = d.norm();
    let (normal, depth) = if dist > 0.0 {
        if dist >= radius {
            return None;
        }
        (d / dist, radius - dist)
    } else {
        // center inside the block: leave through the nearest face
        let faces = [
            (p.x - wall.min[0], Vec2::new(-1.0, 0.0)),
            (wall.max[0] - p.x, Vec2::new(1.0, 0.0)),
            (p.y - wall.min[1], Vec2::new(0.0, -1.0)),
            (wall.max[1] - p.y, Vec2::new(0.0, 1.0)),
        ];
        let (inside, n) = faces
            .into_iter()
            .fold((f64::INFINITY, Vec2::zeros()), |best, f| if f.0 < best.0 { f } else { best });
        (n, radius + inside)
    };
    Some(penalty(normal, depth, v, params))
}

/// Force disc `b` exerts on disc `a`, if they overlap.
pub fn disc_contact(
    pa: Vec2,
    va: Vec2,
    ra: f64,
    pb: Vec2,
    vb: Vec2,
    rb: f64,
    params: &ContactParams,
) -> Option<Vec2> {
    let d = pa - pb;
    let dist = d.norm();
    let reach = ra + rb;
    if dist >= reach {
        return None;
    }
    let normal = if dist > 0.0 { d / dist } else { Vec2::new(1.0, 0.0) };
    Some(penalty(normal, reach - dist, va - vb, params))
}

/// All contact forces at the current configuration.
pub fn contact_forces(
    p: Vec2,
    v: Vec2,
    ee_radius: f64,
    obstacles: &[ObstacleState],
    spec: &MazeSpec,
    params: &ContactParams,
) -> ContactForces {
    let mut out = ContactForces {
        on_ee: Vec2::zeros(),
        ee_from_obstacle: vec![Vec2::zeros(); obstacles.len()],
        on_obstacle: vec![Vec2::zeros(); obstacles.len()],
    };
    for wall in &spec.walls {
        if let Some(f) = wall_contact(p, v, ee_radius, wall, params) {
            out.on_ee += f;
        }
    }
    for (i, o) in obstacles.iter().enumerate() {
        if let Some(f) = disc_contact(p, v, ee_radius, o.p, o.v, o.radius, params) {
            out.on_ee += f;
            out.ee_from_obstacle[i] = f;
            out.on_obstacle[i] -= f;
        }
        for wall in &spec.walls {
            if let Some(f) = wall_contact(o.p, o.v, o.radius, wall, params) {
                out.on_obstacle[i] += f;
            }
        }
        for j in (i + 1)..obstacles.len() {
            let q = &obstacles[j];
            if let Some(f) = disc_contact(o.p, o.v, o.radius, q.p, q.v, q.radius, params) {
                out.on_obstacle[i] += f;
                out.on_obstacle[j] -= f;
            }
        }
    }
    out
}
