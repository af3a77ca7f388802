use std::sync::Arc;

use approx::assert_relative_eq;
use proptest::prelude::*;
use tankguard::control::{
    damping_from_stiffness, elastic_wrench, impedance_force, map_action_stiffness, ActionStiffness, PoseError,
    StiffnessMatrix, Twist, Vec2, Wrench,
};
use tankguard::passivity::{flow_scale, gate_stiffness, passivity_layer_step, spring_power, tank_step};
use tankguard::{ConstraintSet, MazeEnv, MazeSpec, RLAction, RunConfig, SimParams, TankConfig, TankState};

fn tank(e_max: f64, flow_min: f64, on: bool) -> TankConfig {
    TankConfig {
        e_max,
        e_min: 0.0,
        flow_min,
        enabled_budget: on,
        enabled_flow: on,
    }
}

fn at(e: f64, cfg: &TankConfig) -> TankState {
    TankState { e, ..TankState::full(cfg) }
}

fn k(a: f64, b: f64) -> StiffnessMatrix {
    StiffnessMatrix::diagonal(a, b).unwrap()
}

#[test]
fn stiffness_follows_the_motion_frame() {
    let a = ActionStiffness::new(500.0, 700.0).unwrap();
    let along_x = map_action_stiffness(a, Vec2::new(0.03, 0.0)).unwrap();
    assert_relative_eq!(*along_x.matrix(), *k(500.0, 700.0).matrix(), epsilon = 1e-12);
    let along_y = map_action_stiffness(a, Vec2::new(0.0, 0.03)).unwrap();
    assert_relative_eq!(*along_y.matrix(), *k(700.0, 500.0).matrix(), epsilon = 1e-9);

    let diag = map_action_stiffness(ActionStiffness::new(300.0, 1000.0).unwrap(), Vec2::new(0.02, 0.02)).unwrap();
    let [lo, hi] = diag.eigenvalues();
    assert_relative_eq!(lo, 300.0, epsilon = 1e-9);
    assert_relative_eq!(hi, 1000.0, epsilon = 1e-9);
    let u = Vec2::new(1.0, 1.0) / 2f64.sqrt();
    assert_relative_eq!(diag.matrix() * u, u * 300.0, epsilon = 1e-9);

    let err = PoseError::new(Vec2::new(0.01, -0.01)).unwrap();
    let f = elastic_wrench(&diag, &err).f;
    // (0.01, -0.01) lies on the 1000 N/m axis
    assert_relative_eq!(f, Vec2::new(10.0, -10.0), epsilon = 1e-9);
}

#[test]
fn damping_and_impedance_force() {
    let d = damping_from_stiffness(&k(400.0, 900.0), 1.0, 1.0).unwrap();
    assert_relative_eq!(d.eigenvalues()[0], 40.0, epsilon = 1e-9);
    assert_relative_eq!(d.eigenvalues()[1], 60.0, epsilon = 1e-9);
    let d = damping_from_stiffness(&k(625.0, 625.0), 4.0, 0.7).unwrap();
    assert_relative_eq!(d.matrix()[(0, 0)], 70.0, epsilon = 1e-9);
    assert!(damping_from_stiffness(&k(625.0, 625.0), 1.0, 0.0).is_err());

    let kk = k(500.0, 500.0);
    let d = damping_from_stiffness(&kk, 1.0, 1.0).unwrap();
    let d40 = d.matrix()[(0, 0)];
    assert_relative_eq!(d40, 2.0 * 500f64.sqrt(), epsilon = 1e-9);
    let err = PoseError::new(Vec2::new(0.01, 0.0)).unwrap();
    let vel = Twist::new(Vec2::new(0.1, 0.0));
    let full = impedance_force(&kk, &d, &err, &vel, 1.0).f_cmd;
    let half = impedance_force(&kk, &d, &err, &vel, 0.5).f_cmd;
    assert_relative_eq!(full.x, 5.0 - 0.1 * d40, epsilon = 1e-12);
    assert_relative_eq!(half, full * 0.5, epsilon = 1e-12);
    let rest = impedance_force(&kk, &d, &PoseError::new(Vec2::zeros()).unwrap(), &Twist::new(Vec2::zeros()), 0.3);
    assert_eq!(rest.f_cmd, Vec2::zeros());
}

#[test]
fn port_power_and_flow_scaling() {
    assert_relative_eq!(spring_power(&Wrench::new(Vec2::new(5.0, 0.0)), &Twist::new(Vec2::new(0.1, 0.0))), 0.5);
    assert_eq!(spring_power(&Wrench::new(Vec2::new(5.0, 0.0)), &Twist::new(Vec2::zeros())), 0.0);
    assert_relative_eq!(
        spring_power(&Wrench::new(Vec2::new(3.0, -4.0)), &Twist::new(Vec2::new(-0.2, 0.1))),
        -1.0,
        epsilon = 1e-15
    );
    assert_eq!(flow_scale(-1.0, -0.5), 0.5);
    assert_eq!(flow_scale(-0.3, -0.5), 1.0);
    assert_eq!(flow_scale(0.4, -0.5), 1.0);
}

#[test]
fn tank_integration_and_stiffness_hold() {
    let cfg = tank(6.0, -0.5, true);
    let s = tank_step(&at(6.0, &cfg), -0.4, 1.0, &cfg);
    assert_relative_eq!(s.e, 5.6, epsilon = 1e-12);
    assert_eq!(s.alpha, 1.0);

    let s = tank_step(&at(0.2, &cfg), -0.4, 1.0, &cfg);
    assert_eq!((s.e, s.last_flow_applied, s.depleted), (0.2, 0.0, true));

    let s = tank_step(&at(6.0, &cfg), 0.3, 1.0, &cfg);
    assert_eq!(s.e, 6.0);

    assert_eq!(gate_stiffness(true, &k(500.0, 500.0), &k(900.0, 900.0)), k(500.0, 500.0));
    assert_eq!(gate_stiffness(false, &k(500.0, 500.0), &k(900.0, 900.0)), k(900.0, 900.0));
    assert_eq!(gate_stiffness(true, &k(500.0, 500.0), &k(300.0, 300.0)), k(300.0, 300.0));
}

#[test]
fn layer_composes_gate_scaling_and_tank() {
    let err = PoseError::new(Vec2::new(0.002, 0.0)).unwrap();
    let vel = Twist::new(Vec2::new(1.0, 0.0));
    let kk = k(500.0, 500.0);

    let off = tank(6.0, -0.5, false);
    let out = passivity_layer_step(&kk, &kk, &err, &vel, &TankState::full(&off), &off, 1e-3);
    assert_eq!((out.stiffness, out.alpha), (kk, 1.0));
    assert_relative_eq!(out.flow_raw, -1.0, epsilon = 1e-12);
    assert_relative_eq!(out.tank.e, 6.0 - 1e-3, epsilon = 1e-12);

    let on = tank(6.0, -0.5, true);
    let out = passivity_layer_step(&kk, &kk, &err, &vel, &TankState::full(&on), &on, 1e-3);
    assert!(out.tank.last_flow_applied >= -0.5);
    assert_relative_eq!(out.tank.last_flow_applied, -0.5, epsilon = 1e-15);
    assert_relative_eq!(out.alpha, 0.5, epsilon = 1e-15);

    let depleted = TankState { e: 0.0, depleted: true, ..TankState::full(&on) };
    let out = passivity_layer_step(&k(900.0, 900.0), &kk, &err, &vel, &depleted, &on, 1e-3);
    assert_eq!(out.stiffness, kk);
}

fn env(maze: &str, constraints: &str, layer: bool) -> MazeEnv {
    let spec = Arc::new(MazeSpec::builtin(maze).unwrap());
    let set: ConstraintSet = constraints.parse().unwrap();
    let run = RunConfig::new(set).with_layer(layer).with_seed(3);
    MazeEnv::new(spec, SimParams::default(), run).unwrap()
}

#[test]
fn resets_are_seeded_and_jittered_within_radius() {
    let mut a = env("corridor", "Eb6-Ef5", false);
    let mut b = env("corridor", "Eb6-Ef5", false);
    a.reset(11).unwrap();
    b.reset(11).unwrap();
    assert_eq!(a.state(), b.state());
    let start = a.spec().start();
    let r = a.params().start_jitter;
    for seed in 0..1000 {
        a.reset(seed).unwrap();
        assert!((a.state().p - start).norm() <= r + 1e-15);
    }
}

#[test]
fn identical_action_sequences_give_identical_trajectories() {
    let actions: Vec<RLAction> = (0..15)
        .map(|i| RLAction::new(0.03, 0.01 * ((i % 5) as f64 - 2.0), 300.0 + 50.0 * i as f64, 1000.0))
        .collect();
    let run = |layer| {
        let mut e = env("s-maze", "Eb6-Ef5", layer);
        e.reset(5).unwrap();
        let mut states = Vec::new();
        for a in &actions {
            let out = e.step(a).unwrap();
            states.push(e.state().clone());
            if layer {
                assert!(!out.info.violations.energy());
            }
            if out.done {
                break;
            }
        }
        states
    };
    assert_eq!(run(false), run(false));
    assert_eq!(run(true), run(true));
}

#[test]
fn agnostic_runs_only_see_force_violations() {
    let mut e = env("s-maze", "agnostic", false);
    e.reset(1).unwrap();
    for _ in 0..60 {
        let out = e.step(&RLAction::new(0.03, 0.03, 1000.0, 1000.0)).unwrap();
        assert!(!out.info.violations.energy());
        if out.done {
            break;
        }
    }
}

proptest! {
    #[test]
    fn filtered_tank_stays_in_bounds(
        e0 in 0.0f64..6.0,
        flows in prop::collection::vec(-5.0f64..5.0, 1..200),
    ) {
        let cfg = tank(6.0, -0.5, true);
        let mut s = at(e0, &cfg);
        for f in flows {
            s = tank_step(&s, f, 1e-2, &cfg);
            prop_assert!(s.e >= cfg.e_min && s.e <= cfg.e_max);
            prop_assert!(s.last_flow_applied >= cfg.flow_min);
            prop_assert!((0.0..=1.0).contains(&s.alpha));
        }
    }

    #[test]
    fn mapped_stiffness_keeps_its_spectrum(
        k1 in 300.0f64..1000.0, k2 in 300.0f64..1000.0,
        dx in -0.03f64..0.03, dy in -0.03f64..0.03,
    ) {
        let m = map_action_stiffness(ActionStiffness::new(k1, k2).unwrap(), Vec2::new(dx, dy)).unwrap();
        let [lo, hi] = m.eigenvalues();
        prop_assert!((lo - k1.min(k2)).abs() < 1e-8 && (hi - k1.max(k2)).abs() < 1e-8);
        prop_assert_eq!(m.matrix()[(0, 1)], m.matrix()[(1, 0)]);
    }
}
