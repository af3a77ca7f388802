//! Energy tank and the passivity layer.
//!
//! The tank flow is the negated spring power at the interaction port,
//! `Ė_T = −P_K`; draining flows are negative. Two filters act on the
//! controller output:
//!
//! * the flow filter scales the impedance force by `α` so the draining flow
//!   never falls below `flow_min`;
//! * the budget filter refuses any flow that would move the tank outside
//!   `[e_min, e_max]`, and holds the stiffness while the tank is depleted.
//!
//! The tank is integrated with explicit Euler at the control rate.

use serde::{Deserialize, Serialize};

use crate::control::{elastic_wrench, DampingMatrix, PoseError, StiffnessMatrix, Twist, Wrench};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TankConfig {
    /// Upper bound, J. The tank starts full.
    pub e_max: f64,
    /// Lower bound, J.
    pub e_min: f64,
    /// Most negative admissible flow, W.
    pub flow_min: f64,
    /// Budget filter of the passivity layer.
    pub enabled_budget: bool,
    /// Flow filter of the passivity layer.
    pub enabled_flow: bool,
}

impl Default for TankConfig {
    /// Deployment settings: 6 J budget, −0.5 W flow limit, layer off.
    fn default() -> Self {
        TankConfig {
            e_max: 6.0,
            e_min: 0.0,
            flow_min: -0.5,
            enabled_budget: false,
            enabled_flow: false,
        }
    }
}

impl TankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.e_max.is_finite() && self.e_min.is_finite() && self.flow_min.is_finite()) {
            return Err(Error::NonFinite("tank config"));
        }
        if self.e_min > self.e_max {
            return Err(Error::invalid("tank", "e_min must not exceed e_max"));
        }
        if self.flow_min > 0.0 {
            return Err(Error::invalid("tank", "flow_min must be <= 0"));
        }
        Ok(())
    }

    pub fn with_layer(mut self, on: bool) -> Self {
        self.enabled_budget = on;
        self.enabled_flow = on;
        self
    }

    pub fn layer_enabled(&self) -> bool {
        self.enabled_budget || self.enabled_flow
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TankState {
    /// Stored energy, J.
    pub e: f64,
    /// Flow before filtering, W.
    pub last_flow_raw: f64,
    /// Flow actually applied to the tank, W.
    pub last_flow_applied: f64,
    pub alpha: f64,
    /// A draining flow was refused at the lower bound and the tank has not
    /// been refilled since.
    pub depleted: bool,
}

impl TankState {
    pub fn full(cfg: &TankConfig) -> Self {
        TankState {
            e: cfg.e_max,
            last_flow_raw: 0.0,
            last_flow_applied: 0.0,
            alpha: 1.0,
            depleted: false,
        }
    }
}

/// Instantaneous power split at the controller port.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSample {
    /// Spring power `w_K · ẋ`, W.
    pub p_k: f64,
    /// Damping power `ẋᵀ D ẋ`, W. Never negative.
    pub p_d: f64,
}

impl PowerSample {
    pub fn new(w: &Wrench, d: &DampingMatrix, vel: &Twist) -> Self {
        PowerSample {
            p_k: spring_power(w, vel),
            p_d: damping_power(d, vel),
        }
    }

    /// Total impedance power `P_IC = P_K + P_D`.
    pub fn total(&self) -> f64 {
        self.p_k + self.p_d
    }

    /// Tank flow `Ė_T = −P_K`.
    pub fn tank_flow(&self) -> f64 {
        -self.p_k
    }
}

pub fn spring_power(w: &Wrench, vel: &Twist) -> f64 {
    w.f.dot(&vel.v)
}

pub fn damping_power(d: &DampingMatrix, vel: &Twist) -> f64 {
    vel.v.dot(&(d.matrix() * vel.v)).max(0.0)
}

/// Scaling that keeps the draining flow at or above `flow_min`.
///
/// `α = flow_min / flow_raw` when `flow_raw < flow_min ≤ 0`, else 1. The
/// quotient is nudged down by ulps until `α · flow_raw ≥ flow_min` holds in
/// floating point, not just in exact arithmetic.
pub fn flow_scale(flow_raw: f64, flow_min: f64) -> f64 {
    if !(flow_raw < flow_min && flow_min <= 0.0) {
        return 1.0;
    }
    let mut alpha = flow_min / flow_raw;
    while alpha > 0.0 && alpha * flow_raw < flow_min {
        alpha = alpha.next_down();
    }
    if alpha <= 0.0 {
        0.0
    } else {
        alpha.min(1.0)
    }
}

/// Advances the tank by one control tick.
///
/// With the budget filter on, a flow is applied only if it keeps the tank in
/// bounds; a refused drain marks the tank depleted. Drains must stay strictly
/// above `e_min`, so the budget constraint `e ≤ e_min` cannot trigger while
/// the filter is active. Without the filter the tank follows the raw flow
/// downward (for constraint monitoring) but still never stores energy above
/// `e_max`.
pub fn tank_step(state: &TankState, flow_raw: f64, dt: f64, cfg: &TankConfig) -> TankState {
    debug_assert!(dt > 0.0);
    let alpha = if cfg.enabled_flow {
        flow_scale(flow_raw, cfg.flow_min)
    } else {
        1.0
    };
    let requested = if alpha == 1.0 { flow_raw } else { alpha * flow_raw };
    let next = state.e + requested * dt;

    let (served, depleted) = if requested < 0.0 {
        if cfg.enabled_budget {
            if next > cfg.e_min {
                (true, false)
            } else {
                (false, true)
            }
        } else {
            (true, next <= cfg.e_min)
        }
    } else if requested > 0.0 {
        // refilling clears depletion only if the energy is actually stored
        if next > cfg.e_max {
            (false, state.depleted)
        } else {
            (true, false)
        }
    } else {
        (true, state.depleted)
    };

    TankState {
        e: if served { next } else { state.e },
        last_flow_raw: flow_raw,
        last_flow_applied: if served { requested } else { 0.0 },
        alpha,
        depleted,
    }
}

/// Holds the previous stiffness while the tank is depleted, unless the
/// request is a pure decrease (`k_prev − k_new` positive semidefinite).
pub fn gate_stiffness(
    depleted: bool,
    k_prev: &StiffnessMatrix,
    k_new: &StiffnessMatrix,
) -> StiffnessMatrix {
    if depleted && !k_prev.dominates(k_new) {
        *k_prev
    } else {
        *k_new
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerOutput {
    /// Stiffness to use for this tick.
    pub stiffness: StiffnessMatrix,
    /// Force scaling for the impedance term.
    pub alpha: f64,
    pub tank: TankState,
    pub flow_raw: f64,
}

/// One control tick of the passivity layer: stiffness gate, spring power,
/// flow scaling and tank update. With both filters off this is a passthrough
/// that still tracks the tank.
pub fn passivity_layer_step(
    k_requested: &StiffnessMatrix,
    k_active: &StiffnessMatrix,
    err: &PoseError,
    vel: &Twist,
    tank: &TankState,
    cfg: &TankConfig,
    dt: f64,
) -> LayerOutput {
    let stiffness = if cfg.enabled_budget {
        gate_stiffness(tank.depleted, k_active, k_requested)
    } else {
        *k_requested
    };
    let flow_raw = -spring_power(&elastic_wrench(&stiffness, err), vel);
    let tank = tank_step(tank, flow_raw, dt, cfg);
    LayerOutput {
        stiffness,
        alpha: tank.alpha,
        tank,
        flow_raw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{damping_from_stiffness, impedance_force, Vec2};
    use approx::assert_relative_eq;

    fn cfg(e_max: f64, flow_min: f64, on: bool) -> TankConfig {
        TankConfig {
            e_max,
            e_min: 0.0,
            flow_min,
            enabled_budget: on,
            enabled_flow: on,
        }
    }

    fn tank(e: f64) -> TankState {
        TankState {
            e,
            ..TankState::full(&cfg(6.0, -0.5, true))
        }
    }

    #[test]
    fn spring_power_examples() {
        let w = Wrench::new(Vec2::new(5.0, 0.0));
        assert_relative_eq!(spring_power(&w, &Twist::new(Vec2::new(0.1, 0.0))), 0.5, epsilon = 1e-15);
        assert_eq!(spring_power(&w, &Twist::default()), 0.0);
        let w = Wrench::new(Vec2::new(3.0, -4.0));
        assert_relative_eq!(
            spring_power(&w, &Twist::new(Vec2::new(-0.2, 0.1))),
            -1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn damping_power_is_nonnegative() {
        let k = StiffnessMatrix::diagonal(300.0, 1000.0).unwrap();
        let d = damping_from_stiffness(&k, 1.0, 1.0).unwrap();
        let s = PowerSample::new(&Wrench::zero(), &d, &Twist::new(Vec2::new(0.3, -0.2)));
        assert!(s.p_d > 0.0);
        assert_eq!(s.tank_flow(), 0.0);
    }

    #[test]
    fn flow_scale_examples() {
        assert_eq!(flow_scale(-1.0, -0.5), 0.5);
        assert_eq!(flow_scale(-0.3, -0.5), 1.0);
        assert_eq!(flow_scale(0.4, -0.5), 1.0);
        assert_eq!(flow_scale(-0.5, -0.5), 1.0);
        assert_eq!(flow_scale(-1.0, 0.0), 0.0);
    }

    #[test]
    fn tank_step_in_bounds() {
        let c = cfg(6.0, -0.5, true);
        let s = tank_step(&tank(6.0), -0.4, 1.0, &c);
        assert_relative_eq!(s.e, 5.6, epsilon = 1e-12);
        assert_eq!(s.alpha, 1.0);
        assert_eq!(s.last_flow_applied, -0.4);
        assert!(!s.depleted);
    }

    #[test]
    fn tank_step_refuses_drain_at_floor() {
        let c = cfg(6.0, -0.5, true);
        let s = tank_step(&tank(0.2), -0.4, 1.0, &c);
        assert_eq!(s.e, 0.2);
        assert_eq!(s.last_flow_applied, 0.0);
        assert!(s.depleted);
        // stays depleted through zero flow, cleared by a stored refill
        let s = tank_step(&s, 0.0, 1.0, &c);
        assert!(s.depleted);
        let s = tank_step(&s, 0.1, 1.0, &c);
        assert!(!s.depleted);
        assert_relative_eq!(s.e, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn tank_step_does_not_store_above_budget() {
        let c = cfg(6.0, -0.5, true);
        let s = tank_step(&tank(6.0), 0.3, 1.0, &c);
        assert_eq!(s.e, 6.0);
        assert_eq!(s.last_flow_applied, 0.0);
        // same rule for the monitoring-only tank
        let s = tank_step(&tank(6.0), 0.3, 1.0, &cfg(6.0, -0.5, false));
        assert_eq!(s.e, 6.0);
    }

    #[test]
    fn tank_step_scales_flow() {
        let c = cfg(6.0, -0.5, true);
        let s = tank_step(&tank(6.0), -1.0, 1e-3, &c);
        assert_eq!(s.alpha, 0.5);
        assert_eq!(s.last_flow_applied, -0.5);
        assert_relative_eq!(s.e, 6.0 - 0.5e-3, epsilon = 1e-15);
    }

    #[test]
    fn monitoring_tank_follows_raw_flow_below_floor() {
        let c = cfg(6.0, -0.5, false);
        let s = tank_step(&tank(0.2), -0.4, 1.0, &c);
        assert_relative_eq!(s.e, -0.2, epsilon = 1e-12);
        assert_eq!(s.alpha, 1.0);
        assert!(s.depleted);
    }

    #[test]
    fn gate_examples() {
        let k500 = StiffnessMatrix::diagonal(500.0, 500.0).unwrap();
        let k900 = StiffnessMatrix::diagonal(900.0, 900.0).unwrap();
        let k300 = StiffnessMatrix::diagonal(300.0, 300.0).unwrap();
        assert_eq!(gate_stiffness(true, &k500, &k900), k500);
        assert_eq!(gate_stiffness(false, &k500, &k900), k900);
        assert_eq!(gate_stiffness(true, &k500, &k300), k300);
    }

    #[test]
    fn disabled_layer_is_passthrough() {
        let c = cfg(6.0, -0.5, false);
        let k_active = StiffnessMatrix::diagonal(300.0, 300.0).unwrap();
        let k_req = StiffnessMatrix::diagonal(1000.0, 1000.0).unwrap();
        let mut t = tank(0.01);
        t.depleted = true;
        let err = PoseError::new(Vec2::new(0.03, 0.0)).unwrap();
        let vel = Twist::new(Vec2::new(0.3, 0.0));
        let out = passivity_layer_step(&k_req, &k_active, &err, &vel, &t, &c, 1e-3);
        assert_eq!(out.stiffness, k_req);
        assert_eq!(out.alpha, 1.0);
        assert_relative_eq!(out.flow_raw, -9.0, epsilon = 1e-12);
        assert!(out.tank.e < t.e);
    }

    #[test]
    fn layer_scales_force_by_flow_limit() {
        // raw flow −1.0 W against a −0.5 W limit
        let c = cfg(6.0, -0.5, true);
        let k = StiffnessMatrix::diagonal(500.0, 500.0).unwrap();
        let err = PoseError::new(Vec2::new(0.02, 0.0)).unwrap();
        let vel = Twist::new(Vec2::new(0.1, 0.0));
        let out = passivity_layer_step(&k, &k, &err, &vel, &tank(6.0), &c, 1e-3);
        assert_eq!(out.flow_raw, -1.0);
        assert_eq!(out.alpha, 0.5);
        assert_eq!(out.tank.last_flow_applied, -0.5);
        let d = damping_from_stiffness(&k, 1.0, 1.0).unwrap();
        let full = impedance_force(&k, &d, &err, &vel, 1.0).f_cmd;
        let scaled = impedance_force(&k, &d, &err, &vel, out.alpha).f_cmd;
        assert_eq!(scaled, full * 0.5);
    }

    #[test]
    fn layer_holds_stiffness_when_depleted() {
        let c = cfg(6.0, -0.5, true);
        let k_active = StiffnessMatrix::diagonal(500.0, 500.0).unwrap();
        let k_up = StiffnessMatrix::diagonal(900.0, 900.0).unwrap();
        let mut t = tank(0.0);
        t.depleted = true;
        let err = PoseError::new(Vec2::new(0.01, 0.0)).unwrap();
        let vel = Twist::new(Vec2::new(0.01, 0.0));
        let out = passivity_layer_step(&k_up, &k_active, &err, &vel, &t, &c, 1e-3);
        assert_eq!(out.stiffness, k_active);
        assert_eq!(out.tank.e, 0.0);
        assert_eq!(out.tank.last_flow_applied, 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn scaled_flow_respects_limit(flow in -1e3..1e3f64, limit in -10.0..=0.0f64) {
                let alpha = flow_scale(flow, limit);
                prop_assert!((0.0..=1.0).contains(&alpha));
                if flow < limit {
                    prop_assert!(alpha * flow >= limit);
                } else {
                    prop_assert_eq!(alpha, 1.0);
                }
            }

            #[test]
            fn enabled_tank_stays_in_bounds(
                e0 in 0.0..=6.0f64,
                flows in prop::collection::vec(-20.0..20.0f64, 1..200),
            ) {
                let c = cfg(6.0, -0.5, true);
                let mut s = tank(e0);
                for f in flows {
                    s = tank_step(&s, f, 1e-2, &c);
                    prop_assert!(s.e >= 0.0 && s.e <= 6.0);
                    prop_assert!(s.last_flow_applied >= -0.5);
                }
            }
        }
    }
}
