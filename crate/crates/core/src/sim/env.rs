use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::contact::{contact_forces, ContactParams, ObstacleState};
use super::maze::MazeSpec;
use crate::config::RunConfig;
use crate::control::{
    damping_from_stiffness, impedance_force, map_action_stiffness_from, ActionStiffness,
    DampingMatrix, MotionFrame, PoseError, StiffnessMatrix, Twist, Vec2, Wrench, STIFFNESS_MAX,
    STIFFNESS_MIN,
};
use crate::error::{Error, Result};
use crate::passivity::{passivity_layer_step, TankConfig, TankState};

/// Largest equilibrium displacement per action component, m.
pub const DP_MAX: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    /// Multiplier on the end-of-step distance to the goal.
    pub pos: f64,
    /// Penalty when the force limit is exceeded.
    pub col: f64,
    /// Bonus for reaching the goal.
    pub goal: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            pos: -400.0,
            col: -250.0,
            goal: 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Control and integration period, s.
    pub dt: f64,
    /// Control ticks per RL decision.
    pub ticks_per_step: u32,
    /// End-effector mass, kg.
    pub mass: f64,
    /// Damping ratio of the impedance controller.
    pub zeta: f64,
    /// Contact radius of the end-effector, m.
    pub ee_radius: f64,
    pub contact: ContactParams,
    /// Viscous floor drag on obstacles, N·s/m.
    pub obstacle_drag: f64,
    /// Isotropic stiffness after reset, N/m.
    pub k_init: f64,
    /// Episode length limit in RL steps.
    pub max_steps: u32,
    /// Radius of the uniform start-pose jitter, m.
    pub start_jitter: f64,
    /// Standard deviation of additive force-sensor noise, N. Zero disables it.
    pub sensor_noise: f64,
    pub reward: RewardWeights,
    /// Out-of-plane stiffness, N/m. Held constant; exerts no planar force.
    pub k_z: f64,
    /// Rotational stiffness diagonal. Inactive in the planar model.
    pub k_r: [f64; 3],
    /// Translational/rotational coupling stiffness. Inactive in the planar model.
    pub k_c: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 1e-3,
            ticks_per_step: 100,
            mass: 1.0,
            zeta: 1.0,
            ee_radius: 0.01,
            contact: ContactParams {
                stiffness: 1e5,
                damping: 50.0,
            },
            obstacle_drag: 5.0,
            k_init: 500.0,
            max_steps: 300,
            start_jitter: 0.005,
            sensor_noise: 0.0,
            reward: RewardWeights::default(),
            k_z: 750.0,
            k_r: [100.0, 100.0, 0.0],
            k_c: 0.0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("mass", self.mass),
            ("zeta", self.zeta),
            ("ee_radius", self.ee_radius),
            ("contact.stiffness", self.contact.stiffness),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("{v} must be positive")));
            }
        }
        if self.ticks_per_step == 0 || self.max_steps == 0 {
            return Err(Error::invalid("sim", "ticks_per_step and max_steps must be > 0"));
        }
        if !(STIFFNESS_MIN..=STIFFNESS_MAX).contains(&self.k_init) {
            return Err(Error::invalid("k_init", "outside the action stiffness range"));
        }
        if self.start_jitter < 0.0 || self.sensor_noise < 0.0 || self.obstacle_drag < 0.0 {
            return Err(Error::invalid("sim", "negative jitter, noise or drag"));
        }
        Ok(())
    }
}

/// Agent action: equilibrium displacement and motion-frame stiffness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RLAction {
    pub dp: [f64; 2],
    pub k1: f64,
    pub k2: f64,
}

impl RLAction {
    pub fn new(dx: f64, dy: f64, k1: f64, k2: f64) -> Self {
        RLAction { dp: [dx, dy], k1, k2 }
    }

    /// Maps `[-1, 1]⁴` affinely onto the action box.
    pub fn from_unit(u: [f64; 4]) -> Self {
        let mid = 0.5 * (STIFFNESS_MIN + STIFFNESS_MAX);
        let half = 0.5 * (STIFFNESS_MAX - STIFFNESS_MIN);
        RLAction::new(u[0] * DP_MAX, u[1] * DP_MAX, mid + half * u[2], mid + half * u[3])
    }

    pub fn to_unit(&self) -> [f64; 4] {
        let mid = 0.5 * (STIFFNESS_MIN + STIFFNESS_MAX);
        let half = 0.5 * (STIFFNESS_MAX - STIFFNESS_MIN);
        [
            self.dp[0] / DP_MAX,
            self.dp[1] / DP_MAX,
            (self.k1 - mid) / half,
            (self.k2 - mid) / half,
        ]
    }

    /// Action clamped into bounds, and whether anything changed.
    pub fn clipped(&self) -> (RLAction, bool) {
        let c = RLAction {
            dp: [
                self.dp[0].clamp(-DP_MAX, DP_MAX),
                self.dp[1].clamp(-DP_MAX, DP_MAX),
            ],
            k1: self.k1.clamp(STIFFNESS_MIN, STIFFNESS_MAX),
            k2: self.k2.clamp(STIFFNESS_MIN, STIFFNESS_MAX),
        };
        (c, c != *self)
    }

    pub fn is_finite(&self) -> bool {
        self.dp.iter().chain([&self.k1, &self.k2]).all(|x| x.is_finite())
    }
}

/// Which constraints fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Violations {
    pub force: bool,
    pub tank: bool,
    pub flow: bool,
}

impl Violations {
    pub fn any(&self) -> bool {
        self.force || self.tank || self.flow
    }

    pub fn energy(&self) -> bool {
        self.tank || self.flow
    }

    pub fn union(self, o: Violations) -> Violations {
        Violations {
            force: self.force || o.force,
            tank: self.tank || o.tank,
            flow: self.flow || o.flow,
        }
    }
}

/// Wrench-extended observation. The first six slots are the sensed wrench,
/// the last three the end-effector position (height fixed at zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub wrench: [f64; 6],
    pub position: [f64; 3],
}

impl Observation {
    pub const TASK_DIM: usize = 9;
    pub const SAFETY_DIM: usize = 6;

    pub fn task(&self) -> [f64; 9] {
        let mut o = [0.0; 9];
        o[..6].copy_from_slice(&self.wrench);
        o[6..].copy_from_slice(&self.position);
        o
    }

    pub fn safety(&self) -> [f64; 6] {
        self.wrench
    }

    pub fn from_task(v: &[f64]) -> Result<Self> {
        if v.len() != Self::TASK_DIM {
            return Err(Error::DimensionMismatch {
                expected: Self::TASK_DIM,
                got: v.len(),
            });
        }
        let mut o = Observation {
            wrench: [0.0; 6],
            position: [0.0; 3],
        };
        o.wrench.copy_from_slice(&v[..6]);
        o.position.copy_from_slice(&v[6..]);
        Ok(o)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepInfo {
    pub violations: Violations,
    pub success: bool,
    /// Step limit reached without success or violation.
    pub truncated: bool,
    /// The action had to be clamped into bounds.
    pub clipped: bool,
    /// Ticks executed (fewer than a full step when a constraint fired).
    pub ticks: u32,
    /// Largest sensed force magnitude during the step, N.
    pub max_force: f64,
    /// Net energy taken from the tank during the step, J.
    pub energy_drawn: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Everything that evolves during an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub p: Vec2,
    pub v: Vec2,
    pub equilibrium: Vec2,
    pub frame: MotionFrame,
    /// Stiffness requested by the latest action.
    pub k_requested: StiffnessMatrix,
    /// Stiffness in use after the passivity layer.
    pub k_active: StiffnessMatrix,
    pub damping: DampingMatrix,
    pub obstacles: Vec<ObstacleState>,
    pub sensed: Wrench,
    pub tank: TankState,
    pub tick: u64,
    pub step: u32,
    noise: ChaCha8Rng,
}

impl SimState {
    pub fn observation(&self) -> Observation {
        Observation {
            wrench: self.sensed.as_six(),
            position: [self.p.x, self.p.y, 0.0],
        }
    }

    /// Spring potential at the current displacement, J.
    pub fn spring_potential(&self) -> f64 {
        let dp = self.equilibrium - self.p;
        0.5 * dp.dot(&(self.k_active.matrix() * dp))
    }

    pub fn kinetic_energy(&self, mass: f64) -> f64 {
        0.5 * mass * self.v.norm_squared()
    }
}

/// Per-tick snapshot for episode logs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub tick: u64,
    pub step: u32,
    pub p: Vec2,
    pub v: Vec2,
    pub sensed: Wrench,
    pub k_eig: [f64; 2],
    pub tank: TankState,
    pub violations: Violations,
}

/// Fresh episode at the maze start with jitter drawn from `seed`.
pub fn reset(spec: &MazeSpec, params: &SimParams, tank: &TankConfig, seed: u64) -> Result<SimState> {
    reset_at(spec, params, tank, spec.start(), seed)
}

/// Fresh episode at `pose` plus jitter. Deterministic in `(spec, pose, seed)`.
pub fn reset_at(
    spec: &MazeSpec,
    params: &SimParams,
    tank: &TankConfig,
    pose: Vec2,
    seed: u64,
) -> Result<SimState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = if params.start_jitter > 0.0 {
        let angle = rng.random::<f64>() * std::f64::consts::TAU;
        let radius = params.start_jitter * rng.random::<f64>().sqrt();
        pose + Vec2::new(angle.cos(), angle.sin()) * radius
    } else {
        pose
    };
    let k = StiffnessMatrix::diagonal(params.k_init, params.k_init)?;
    let damping = damping_from_stiffness(&k, params.mass, params.zeta)?;
    Ok(SimState {
        p,
        v: Vec2::zeros(),
        equilibrium: p,
        frame: MotionFrame::default(),
        k_requested: k,
        k_active: k,
        damping,
        obstacles: spec
            .obstacles
            .iter()
            .map(|o| ObstacleState {
                p: Vec2::from(o.center),
                v: Vec2::zeros(),
                radius: o.radius,
                mass: o.mass,
            })
            .collect(),
        sensed: Wrench::zero(),
        tank: TankState::full(tank),
        tick: 0,
        step: 0,
        noise: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_f0_7c_e5),
    })
}

/// Constraint flags for the latest tick. The budget constraint fires when
/// the tank reaches its lower bound, the flow constraint when the applied
/// flow drains faster than the limit. Only the force constraint is checked
/// for the agnostic set.
pub fn check_constraints(state: &SimState, run: &RunConfig) -> Violations {
    check_with(state, run, &run.tank_config())
}

fn check_with(state: &SimState, run: &RunConfig, tank: &TankConfig) -> Violations {
    Violations {
        force: state.sensed.magnitude() > run.force_limit,
        tank: run.constraints.budget_monitored() && state.tank.e <= tank.e_min,
        flow: run.constraints.flow_monitored() && state.tank.last_flow_applied < tank.flow_min,
    }
}

/// Advances one control tick.
fn tick(
    state: &mut SimState,
    spec: &MazeSpec,
    params: &SimParams,
    tank_cfg: &TankConfig,
) -> Result<()> {
    let tick_no = state.tick;
    let diverged = |what| Error::Diverged { tick: tick_no, what };
    let err = PoseError::between(state.p, state.equilibrium).map_err(|_| diverged("pose error"))?;
    let vel = Twist::new(state.v);
    let layer = passivity_layer_step(
        &state.k_requested,
        &state.k_active,
        &err,
        &vel,
        &state.tank,
        tank_cfg,
        params.dt,
    );
    if layer.stiffness != state.k_active {
        state.k_active = layer.stiffness;
        state.damping = damping_from_stiffness(&state.k_active, params.mass, params.zeta)?;
    }
    state.tank = layer.tank;
    let f_cmd = impedance_force(&state.k_active, &state.damping, &err, &vel, layer.alpha).f_cmd;

    let contacts = contact_forces(
        state.p,
        state.v,
        params.ee_radius,
        &state.obstacles,
        spec,
        &params.contact,
    );
    let mut sensed = -contacts.on_ee;
    if params.sensor_noise > 0.0 {
        let nx: f64 = state.noise.sample(StandardNormal);
        let ny: f64 = state.noise.sample(StandardNormal);
        sensed += Vec2::new(nx, ny) * params.sensor_noise;
    }
    state.sensed = Wrench::new(sensed);

    let dt = params.dt;
    state.v += (f_cmd + contacts.on_ee) * (dt / params.mass);
    state.p += state.v * dt;
    for (o, f) in state.obstacles.iter_mut().zip(&contacts.on_obstacle) {
        o.v += (f - o.v * params.obstacle_drag) * (dt / o.mass);
        o.p += o.v * dt;
    }
    state.tick += 1;

    let finite = |v: &Vec2| v.x.is_finite() && v.y.is_finite();
    if !finite(&state.p) || !finite(&state.v) || !state.tank.e.is_finite() {
        return Err(diverged("end-effector state"));
    }
    if state.obstacles.iter().any(|o| !finite(&o.p) || !finite(&o.v)) {
        return Err(diverged("obstacle state"));
    }
    Ok(())
}

/// Applies one RL action: new equilibrium `p + dp`, new requested stiffness,
/// then up to `ticks_per_step` control ticks. The tick loop stops at the
/// first constraint violation.
pub fn env_step(
    state: &mut SimState,
    action: &RLAction,
    spec: &MazeSpec,
    params: &SimParams,
    run: &RunConfig,
    mut trace: Option<&mut Vec<TickRecord>>,
) -> Result<StepOutcome> {
    if !action.is_finite() {
        return Err(Error::NonFinite("action"));
    }
    let (action, clipped) = action.clipped();
    let tank_cfg = run.tank_config();
    let dp = Vec2::from(action.dp);
    let (k_req, frame) = map_action_stiffness_from(
        ActionStiffness {
            k1: action.k1,
            k2: action.k2,
        },
        dp,
        state.frame,
    )?;
    state.frame = frame;
    state.k_requested = k_req;
    state.equilibrium = state.p + dp;

    let e_before = state.tank.e;
    let mut violations = Violations::default();
    let mut max_force: f64 = 0.0;
    let mut ticks = 0;
    for _ in 0..params.ticks_per_step {
        tick(state, spec, params, &tank_cfg)?;
        ticks += 1;
        max_force = max_force.max(state.sensed.magnitude());
        let v = check_with(state, run, &tank_cfg);
        if let Some(t) = trace.as_deref_mut() {
            t.push(TickRecord {
                tick: state.tick,
                step: state.step,
                p: state.p,
                v: state.v,
                sensed: state.sensed,
                k_eig: state.k_active.eigenvalues(),
                tank: state.tank,
                violations: v,
            });
        }
        if v.any() {
            violations = v;
            break;
        }
    }
    state.step += 1;

    let dist = (state.p - spec.goal()).norm();
    let success = !violations.any() && dist <= spec.goal_radius;
    let truncated = !violations.any() && !success && state.step >= params.max_steps;
    let w = &params.reward;
    let mut reward = w.pos * dist;
    if violations.force {
        reward += w.col;
    }
    if success {
        reward += w.goal;
    }
    Ok(StepOutcome {
        observation: state.observation(),
        reward,
        done: success || violations.any() || truncated,
        info: StepInfo {
            violations,
            success,
            truncated,
            clipped,
            ticks,
            max_force,
            energy_drawn: e_before - state.tank.e,
        },
    })
}

/// A maze environment bound to one run configuration.
#[derive(Debug, Clone)]
pub struct MazeEnv {
    spec: Arc<MazeSpec>,
    params: SimParams,
    run: RunConfig,
    state: SimState,
}

impl MazeEnv {
    pub fn new(spec: Arc<MazeSpec>, params: SimParams, run: RunConfig) -> Result<Self> {
        params.validate()?;
        run.validate()?;
        spec.validate(params.ee_radius)?;
        let state = reset(&spec, &params, &run.tank_config(), run.seed)?;
        Ok(MazeEnv {
            spec,
            params,
            run,
            state,
        })
    }

    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        self.state = reset(&self.spec, &self.params, &self.run.tank_config(), seed)?;
        Ok(self.state.observation())
    }

    pub fn reset_at(&mut self, pose: Vec2, seed: u64) -> Result<Observation> {
        self.state = reset_at(&self.spec, &self.params, &self.run.tank_config(), pose, seed)?;
        Ok(self.state.observation())
    }

    pub fn step(&mut self, action: &RLAction) -> Result<StepOutcome> {
        env_step(&mut self.state, action, &self.spec, &self.params, &self.run, None)
    }

    pub fn step_traced(&mut self, action: &RLAction, trace: &mut Vec<TickRecord>) -> Result<StepOutcome> {
        env_step(&mut self.state, action, &self.spec, &self.params, &self.run, Some(trace))
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn spec(&self) -> &Arc<MazeSpec> {
        &self.spec
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn run(&self) -> &RunConfig {
        &self.run
    }

    /// Same dynamics, different constraint monitoring or layer setting.
    pub fn set_run(&mut self, run: RunConfig) -> Result<()> {
        run.validate()?;
        self.run = run;
        Ok(())
    }
}
