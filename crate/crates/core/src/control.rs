//! Cartesian variable-impedance control for a planar point end-effector.
//!
//! The end-effector is a point mass driven directly by the commanded force
//! (identity Jacobian). The RL action selects a displacement of the spring
//! equilibrium and two stiffness values expressed in the motion frame: `k1`
//! along the commanded displacement and `k2` orthogonal to it. Damping is
//! designed per stiffness eigen-axis as `2 ζ √(m k)`.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Lower bound of the action stiffness range, N/m.
pub const STIFFNESS_MIN: f64 = 300.0;
/// Upper bound of the action stiffness range, N/m.
pub const STIFFNESS_MAX: f64 = 1000.0;

/// Displacements shorter than this keep the previous motion frame.
pub const MIN_MOTION: f64 = 1e-6;

/// Largest admissible pose error: the workspace diameter.
pub const MAX_POSE_ERROR: f64 = 1.0;

/// Displacement from the end-effector to the spring equilibrium, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError(Vec2);

impl PoseError {
    pub fn new(delta_p: Vec2) -> Result<Self> {
        if !all_finite(&delta_p) {
            return Err(Error::NonFinite("pose error"));
        }
        if delta_p.norm() > MAX_POSE_ERROR {
            return Err(Error::invalid(
                "pose error",
                format!("|dp| = {} m exceeds the workspace", delta_p.norm()),
            ));
        }
        Ok(PoseError(delta_p))
    }

    /// Error between the current position and the equilibrium point.
    pub fn between(position: Vec2, equilibrium: Vec2) -> Result<Self> {
        Self::new(equilibrium - position)
    }

    pub fn delta_p(&self) -> Vec2 {
        self.0
    }
}

/// Stiffness pair chosen by the agent, expressed in the motion frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionStiffness {
    pub k1: f64,
    pub k2: f64,
}

impl ActionStiffness {
    pub fn new(k1: f64, k2: f64) -> Result<Self> {
        let a = ActionStiffness { k1, k2 };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        for value in [self.k1, self.k2] {
            if !value.is_finite() {
                return Err(Error::NonFinite("action stiffness"));
            }
            if !(STIFFNESS_MIN..=STIFFNESS_MAX).contains(&value) {
                return Err(Error::StiffnessOutOfRange {
                    value,
                    min: STIFFNESS_MIN,
                    max: STIFFNESS_MAX,
                });
            }
        }
        Ok(())
    }
}

/// Planar rotation whose first axis is the most recent motion direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionFrame {
    pub cos: f64,
    pub sin: f64,
}

impl Default for MotionFrame {
    fn default() -> Self {
        MotionFrame { cos: 1.0, sin: 0.0 }
    }
}

impl MotionFrame {
    /// Frame aligned with `dp`, or `previous` when `dp` is too short to define
    /// a direction.
    pub fn from_motion(dp: Vec2, previous: MotionFrame) -> Result<Self> {
        if !all_finite(&dp) {
            return Err(Error::NonFinite("displacement"));
        }
        let n = dp.norm();
        if n < MIN_MOTION {
            return Ok(previous);
        }
        Ok(MotionFrame {
            cos: dp.x / n,
            sin: dp.y / n,
        })
    }

    /// Rotation matrix with columns (motion, in-plane normal).
    pub fn rotation(&self) -> Matrix2<f64> {
        Matrix2::new(self.cos, -self.sin, self.sin, self.cos)
    }
}

/// World-frame translational stiffness, N/m. Symmetric positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StiffnessMatrix(Matrix2<f64>);

impl StiffnessMatrix {
    pub fn diagonal(kx: f64, ky: f64) -> Result<Self> {
        Self::from_matrix(Matrix2::new(kx, 0.0, 0.0, ky))
    }

    /// Wraps `k` after checking symmetry and positive definiteness.
    pub fn from_matrix(k: Matrix2<f64>) -> Result<Self> {
        if k.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("stiffness matrix"));
        }
        let scale = k.amax().max(f64::MIN_POSITIVE);
        if (k[(0, 1)] - k[(1, 0)]).abs() > 1e-9 * scale {
            return Err(Error::invalid("stiffness", "matrix is not symmetric"));
        }
        if k[(0, 0)] <= 0.0 || k.determinant() <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(StiffnessMatrix(k))
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.0
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        sym_eigenvalues(&self.0)
    }

    /// Spring potential `½ Δpᵀ K Δp` stored at displacement `err`.
    pub fn potential(&self, err: &PoseError) -> f64 {
        let dp = err.delta_p();
        0.5 * dp.dot(&(self.0 * dp))
    }

    /// True when `self − other` is positive semidefinite, i.e. moving from
    /// `other` to `self` cannot lower the stored energy at any displacement.
    pub fn dominates(&self, other: &StiffnessMatrix) -> bool {
        let diff = self.0 - other.0;
        let [lo, _] = sym_eigenvalues(&diff);
        lo >= 0.0
    }
}

/// World-frame damping, N·s/m. Symmetric positive semidefinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingMatrix(Matrix2<f64>);

impl DampingMatrix {
    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.0
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        sym_eigenvalues(&self.0)
    }
}

/// Planar wrench. Torque components are identically zero in this model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub f: Vec2,
}

impl Wrench {
    pub fn new(f: Vec2) -> Self {
        Wrench { f }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn magnitude(&self) -> f64 {
        self.f.norm()
    }

    /// Six-slot force/torque layout `[fx, fy, fz, mx, my, mz]`.
    pub fn as_six(&self) -> [f64; 6] {
        [self.f.x, self.f.y, 0.0, 0.0, 0.0, 0.0]
    }
}

/// End-effector Cartesian velocity, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub v: Vec2,
}

impl Twist {
    pub fn new(v: Vec2) -> Self {
        Twist { v }
    }
}

/// Total commanded force on the end-effector mass, N.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForceCommand {
    pub f_cmd: Vec2,
}

/// Maps the motion-frame stiffness pair to the world frame, `K = R diag(k1, k2) Rᵀ`,
/// where `R` is built from the normalized displacement. A displacement
/// shorter than [`MIN_MOTION`] falls back to the identity frame.
pub fn map_action_stiffness(a: ActionStiffness, dp: Vec2) -> Result<StiffnessMatrix> {
    map_action_stiffness_from(a, dp, MotionFrame::default()).map(|(k, _)| k)
}

/// As [`map_action_stiffness`], falling back to `previous` for short
/// displacements. Returns the frame that was used.
pub fn map_action_stiffness_from(
    a: ActionStiffness,
    dp: Vec2,
    previous: MotionFrame,
) -> Result<(StiffnessMatrix, MotionFrame)> {
    a.validate()?;
    let frame = MotionFrame::from_motion(dp, previous)?;
    Ok((stiffness_in_frame(a, frame), frame))
}

/// `R diag(k1, k2) Rᵀ` written out; symmetric by construction.
pub fn stiffness_in_frame(a: ActionStiffness, frame: MotionFrame) -> StiffnessMatrix {
    let (c, s) = (frame.cos, frame.sin);
    let xx = a.k1 * c * c + a.k2 * s * s;
    let yy = a.k1 * s * s + a.k2 * c * c;
    let xy = (a.k1 - a.k2) * c * s;
    StiffnessMatrix(Matrix2::new(xx, xy, xy, yy))
}

/// Force of the virtual spring, pulling the end-effector toward the equilibrium.
pub fn elastic_wrench(k: &StiffnessMatrix, err: &PoseError) -> Wrench {
    Wrench::new(k.0 * err.delta_p())
}

/// Damping sharing the stiffness eigenvectors with eigenvalues `2 ζ √(m kᵢ)`.
///
/// Computed as `2 ζ √m · K^{1/2}` with the closed-form square root of a 2×2
/// SPD matrix, `(K + √det K · I) / √(tr K + 2 √det K)`.
pub fn damping_from_stiffness(k: &StiffnessMatrix, mass: f64, zeta: f64) -> Result<DampingMatrix> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::invalid("mass", format!("{mass} must be positive")));
    }
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(Error::invalid("zeta", format!("{zeta} must be positive")));
    }
    let m = k.0;
    let det = m.determinant();
    if m[(0, 0)] <= 0.0 || det <= 0.0 {
        return Err(Error::NotPositiveDefinite);
    }
    let root_det = det.sqrt();
    let t = (m.trace() + 2.0 * root_det).sqrt();
    let sqrt_k = (m + Matrix2::identity() * root_det) / t;
    Ok(DampingMatrix(sqrt_k * (2.0 * zeta * mass.sqrt())))
}

/// `α (K Δp − D v)`: the impedance force with the flow scaling applied to the sum.
pub fn impedance_force(
    k: &StiffnessMatrix,
    d: &DampingMatrix,
    err: &PoseError,
    vel: &Twist,
    alpha: f64,
) -> ForceCommand {
    debug_assert!((0.0..=1.0).contains(&alpha), "alpha = {alpha}");
    let f = k.0 * err.delta_p() - d.0 * vel.v;
    ForceCommand { f_cmd: f * alpha }
}

fn all_finite(v: &Vec2) -> bool {
    v.x.is_finite() && v.y.is_finite()
}

/// Ascending eigenvalues of a symmetric 2×2 matrix.
pub(crate) fn sym_eigenvalues(m: &Matrix2<f64>) -> [f64; 2] {
    let a = m[(0, 0)];
    let d = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let mean = 0.5 * (a + d);
    let r = (0.5 * (a - d)).hypot(b);
    [mean - r, mean + r]
}
