//! Discrete-time benchmark systems `x_{t+1} = F(x_t, u_t)` and their costs.
//!
//! Energies are `E(U) = -J(U)` with `J(U) = Σ_t C(x_t, u_t) + C_f(x_T)`.

// redundant when another crate in the graph links std
#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::rng::standard_normal;
use crate::{ControlSequence, EnergyModel, Error, Result, RunSeed};

pub trait Dynamics {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    /// Noise-free step `F(x, u)` written into `next`.
    fn step(&self, x: &[f64], u: &[f64], next: &mut [f64]);
    /// Standard deviation of additive Gaussian process noise (0 = deterministic).
    fn process_noise(&self) -> f64 {
        0.0
    }
}

pub trait Cost {
    fn running(&self, x: &[f64], u: &[f64]) -> f64;
    fn terminal(&self, x: &[f64]) -> f64;
}

/// States, controls and total cost of one rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    state_dim: usize,
    states: Vec<f64>,
    pub controls: ControlSequence,
    pub total_cost: f64,
}

impl Trajectory {
    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn states(&self) -> core::slice::ChunksExact<'_, f64> {
        self.states.chunks_exact(self.state_dim)
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.controls.horizon())
    }

    pub fn horizon(&self) -> usize {
        self.controls.horizon()
    }
}

/// Roll `U` out from `x0`. Fails if the model has process noise; use
/// [`rollout_seeded`] then.
pub fn rollout<D, C>(dynamics: &D, cost: &C, x0: &[f64], controls: &ControlSequence) -> Result<Trajectory>
where
    D: Dynamics + ?Sized,
    C: Cost + ?Sized,
{
    if dynamics.process_noise() > 0.0 {
        return Err(Error::invalid(
            "process_noise",
            "stochastic dynamics need a seed (rollout_seeded)",
        ));
    }
    rollout_seeded(dynamics, cost, x0, controls, None)
}

/// Rollout with optional process noise drawn from `noise = (seed, index)`.
pub fn rollout_seeded<D, C>(
    dynamics: &D,
    cost: &C,
    x0: &[f64],
    controls: &ControlSequence,
    noise: Option<(&RunSeed, u64)>,
) -> Result<Trajectory>
where
    D: Dynamics + ?Sized,
    C: Cost + ?Sized,
{
    let n = dynamics.state_dim();
    Error::check_dim("initial state", n, x0.len())?;
    Error::check_dim("control dimension", dynamics.control_dim(), controls.dim())?;
    let sigma = dynamics.process_noise();
    let mut rng = match noise {
        Some((seed, index)) if sigma > 0.0 => Some(seed.rng(index)),
        _ => None,
    };
    let horizon = controls.horizon();
    let mut states = vec![0.0; (horizon + 1) * n];
    states[..n].copy_from_slice(x0);
    let mut total = 0.0;
    for (t, u) in controls.steps().enumerate() {
        let (done, rest) = states.split_at_mut((t + 1) * n);
        let x = &done[t * n..];
        total += cost.running(x, u);
        let next = &mut rest[..n];
        dynamics.step(x, u, next);
        if let Some(rng) = rng.as_mut() {
            for v in next.iter_mut() {
                *v += sigma * standard_normal(rng);
            }
        }
    }
    total += cost.terminal(&states[horizon * n..]);
    Ok(Trajectory {
        state_dim: n,
        states,
        controls: controls.clone(),
        total_cost: total,
    })
}

/// `E(U) = -J(U)` by rollout from a fixed `x0`.
///
/// Rollouts that produce a non-finite cost evaluate to `-inf`.
#[derive(Debug, Clone)]
pub struct RolloutEnergy<'a, D: ?Sized, C: ?Sized> {
    dynamics: &'a D,
    cost: &'a C,
    x0: Vec<f64>,
    horizon: usize,
}

pub fn energy_of<'a, D, C>(
    dynamics: &'a D,
    cost: &'a C,
    x0: &[f64],
    horizon: usize,
) -> Result<RolloutEnergy<'a, D, C>>
where
    D: Dynamics + ?Sized,
    C: Cost + ?Sized,
{
    Error::check_dim("initial state", dynamics.state_dim(), x0.len())?;
    if horizon == 0 {
        return Err(Error::invalid("horizon", "must be >= 1"));
    }
    Ok(RolloutEnergy {
        dynamics,
        cost,
        x0: x0.to_vec(),
        horizon,
    })
}

impl<D: Dynamics + ?Sized, C: Cost + ?Sized> RolloutEnergy<'_, D, C> {
    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

impl<D: Dynamics + ?Sized, C: Cost + ?Sized> EnergyModel for RolloutEnergy<'_, D, C> {
    fn dim(&self) -> usize {
        self.horizon * self.dynamics.control_dim()
    }

    fn energy(&self, x: &[f64]) -> f64 {
        let Ok(u) = ControlSequence::from_flat(self.dynamics.control_dim(), x.to_vec()) else {
            return f64::NEG_INFINITY;
        };
        match rollout_seeded(self.dynamics, self.cost, &self.x0, &u, None) {
            Ok(traj) if traj.total_cost.is_finite() => -traj.total_cost,
            _ => f64::NEG_INFINITY,
        }
    }
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

/// 1D double integrator `p' = p + v·dt`, `v' = v + u·dt` with quadratic cost.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DoubleIntegrator {
    pub dt: f64,
    pub position_weight: f64,
    pub velocity_weight: f64,
    pub control_weight: f64,
    pub terminal_weight: f64,
    pub process_noise: f64,
}

impl Default for DoubleIntegrator {
    fn default() -> Self {
        DoubleIntegrator {
            dt: 0.1,
            position_weight: 1.0,
            velocity_weight: 0.1,
            control_weight: 0.01,
            terminal_weight: 10.0,
            process_noise: 0.0,
        }
    }
}

impl Dynamics for DoubleIntegrator {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn step(&self, x: &[f64], u: &[f64], next: &mut [f64]) {
        next[0] = x[0] + x[1] * self.dt;
        next[1] = x[1] + u[0] * self.dt;
    }
    fn process_noise(&self) -> f64 {
        self.process_noise
    }
}

impl Cost for DoubleIntegrator {
    fn running(&self, x: &[f64], u: &[f64]) -> f64 {
        self.position_weight * x[0] * x[0]
            + self.velocity_weight * x[1] * x[1]
            + self.control_weight * u[0] * u[0]
    }
    fn terminal(&self, x: &[f64]) -> f64 {
        self.terminal_weight * (x[0] * x[0] + x[1] * x[1])
    }
}

/// Torque-limited pendulum `θ'' = -(g/l)·sin θ + u`, semi-implicit Euler.
///
/// `θ = π` is upright. Gravity is evaluated as `sin(θ − π)` so the upright
/// equilibrium is an exact fixed point in floating point.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Pendulum {
    pub dt: f64,
    pub gravity: f64,
    pub length: f64,
    pub max_torque: f64,
    pub angle_weight: f64,
    pub velocity_weight: f64,
    pub control_weight: f64,
    pub terminal_weight: f64,
    pub process_noise: f64,
}

impl Default for Pendulum {
    fn default() -> Self {
        Pendulum {
            dt: 0.05,
            gravity: 9.81,
            length: 1.0,
            max_torque: 6.0,
            angle_weight: 1.0,
            velocity_weight: 0.1,
            control_weight: 0.001,
            terminal_weight: 5.0,
            process_noise: 0.0,
        }
    }
}

impl Pendulum {
    /// Distance from upright, wrapped to `[0, π]`.
    pub fn upright_error(theta: f64) -> f64 {
        let a = theta - PI;
        let d = a - 2.0 * PI * (a / (2.0 * PI)).floor();
        d.min(2.0 * PI - d)
    }

    fn state_cost(&self, x: &[f64]) -> f64 {
        // 1 + cos θ, zero upright
        self.angle_weight * (1.0 - (x[0] - PI).cos()) + self.velocity_weight * x[1] * x[1]
    }
}

impl Dynamics for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn step(&self, x: &[f64], u: &[f64], next: &mut [f64]) {
        let torque = u[0].max(-self.max_torque).min(self.max_torque);
        let sin_theta = -(x[0] - PI).sin();
        let v = x[1] + self.dt * (-(self.gravity / self.length) * sin_theta + torque);
        next[0] = x[0] + self.dt * v;
        next[1] = v;
    }
    fn process_noise(&self) -> f64 {
        self.process_noise
    }
}

impl Cost for Pendulum {
    fn running(&self, x: &[f64], u: &[f64]) -> f64 {
        self.state_cost(x) + self.control_weight * u[0] * u[0]
    }
    fn terminal(&self, x: &[f64]) -> f64 {
        self.terminal_weight * self.state_cost(x)
    }
}

/// Velocity-controlled point in the plane with one circular obstacle.
///
/// State `[x, y]`, control `[vx, vy]`, `x' = x + clip(u)·dt` where `clip`
/// rescales `u` to at most `max_speed`. Obstacle contact is a
/// smooth penalty `w · softplus(k · (r − d))` on every visited state.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PointMassNav {
    pub dt: f64,
    pub goal: [f64; 2],
    pub obstacle_center: [f64; 2],
    pub obstacle_radius: f64,
    pub obstacle_weight: f64,
    /// softplus sharpness k, per unit length
    pub obstacle_sharpness: f64,
    pub goal_weight: f64,
    pub control_weight: f64,
    pub terminal_weight: f64,
    pub max_speed: f64,
    pub process_noise: f64,
}

impl Default for PointMassNav {
    fn default() -> Self {
        PointMassNav {
            dt: 0.1,
            goal: [2.0, 0.0],
            obstacle_center: [1.0, 0.0],
            obstacle_radius: 0.3,
            obstacle_weight: 10.0,
            obstacle_sharpness: 20.0,
            goal_weight: 1.0,
            control_weight: 0.01,
            terminal_weight: 10.0,
            max_speed: 2.0,
            process_noise: 0.0,
        }
    }
}

impl PointMassNav {
    /// `u` rescaled to norm at most `max_speed`.
    pub fn clip_velocity(&self, u: &[f64]) -> [f64; 2] {
        let speed = (u[0] * u[0] + u[1] * u[1]).sqrt();
        if speed > self.max_speed {
            let k = self.max_speed / speed;
            [u[0] * k, u[1] * k]
        } else {
            [u[0], u[1]]
        }
    }

    pub fn obstacle_distance(&self, p: &[f64]) -> f64 {
        let dx = p[0] - self.obstacle_center[0];
        let dy = p[1] - self.obstacle_center[1];
        (dx * dx + dy * dy).sqrt()
    }

    pub fn goal_distance(&self, p: &[f64]) -> f64 {
        let dx = p[0] - self.goal[0];
        let dy = p[1] - self.goal[1];
        (dx * dx + dy * dy).sqrt()
    }

    pub fn obstacle_penalty(&self, p: &[f64]) -> f64 {
        let depth = self.obstacle_radius - self.obstacle_distance(p);
        self.obstacle_weight * softplus(self.obstacle_sharpness * depth)
    }

    /// Whether the segment `a → b` enters the obstacle disc.
    pub fn segment_penetrates(&self, a: &[f64], b: &[f64]) -> bool {
        let (cx, cy) = (self.obstacle_center[0], self.obstacle_center[1]);
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((cx - a[0]) * dx + (cy - a[1]) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let closest = [a[0] + t * dx, a[1] + t * dy];
        self.obstacle_distance(&closest) < self.obstacle_radius
    }
}

impl Dynamics for PointMassNav {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn step(&self, x: &[f64], u: &[f64], next: &mut [f64]) {
        let v = self.clip_velocity(u);
        next[0] = x[0] + self.dt * v[0];
        next[1] = x[1] + self.dt * v[1];
    }
    fn process_noise(&self) -> f64 {
        self.process_noise
    }
}

impl Cost for PointMassNav {
    fn running(&self, x: &[f64], u: &[f64]) -> f64 {
        let g = self.goal_distance(x);
        self.goal_weight * g * g
            + self.control_weight * (u[0] * u[0] + u[1] * u[1])
            + self.obstacle_penalty(x)
    }
    fn terminal(&self, x: &[f64]) -> f64 {
        let g = self.goal_distance(x);
        self.terminal_weight * g * g + self.obstacle_penalty(x)
    }
}

/// Toy system where the action is the next-state delta: `x' = x + u`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeltaSystem {
    pub dim: usize,
    pub goal: Vec<f64>,
}

impl Dynamics for DeltaSystem {
    fn state_dim(&self) -> usize {
        self.dim
    }
    fn control_dim(&self) -> usize {
        self.dim
    }
    fn step(&self, x: &[f64], u: &[f64], next: &mut [f64]) {
        for ((n, a), b) in next.iter_mut().zip(x).zip(u) {
            *n = a + b;
        }
    }
}

impl Cost for DeltaSystem {
    fn running(&self, x: &[f64], _u: &[f64]) -> f64 {
        self.terminal(x)
    }
    fn terminal(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.goal).map(|(a, g)| (a - g) * (a - g)).sum()
    }
}

/// Any of the shipped environments, selectable by name from a config.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "name", content = "params", rename_all = "snake_case")
)]
pub enum Environment {
    DoubleIntegrator(DoubleIntegrator),
    Pendulum(Pendulum),
    PointMassNav(PointMassNav),
}

impl Environment {
    fn inner(&self) -> (&dyn Dynamics, &dyn Cost) {
        match self {
            Environment::DoubleIntegrator(e) => (e, e),
            Environment::Pendulum(e) => (e, e),
            Environment::PointMassNav(e) => (e, e),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Environment::DoubleIntegrator(_) => "double_integrator",
            Environment::Pendulum(_) => "pendulum",
            Environment::PointMassNav(_) => "point_mass_nav",
        }
    }

    /// Default initial state: at rest away from the target.
    pub fn default_initial_state(&self) -> Vec<f64> {
        match self {
            Environment::DoubleIntegrator(_) => vec![1.0, 0.0],
            Environment::Pendulum(_) => vec![0.0, 0.0],
            Environment::PointMassNav(_) => vec![0.0, 0.0],
        }
    }
}

impl Dynamics for Environment {
    fn state_dim(&self) -> usize {
        self.inner().0.state_dim()
    }
    fn control_dim(&self) -> usize {
        self.inner().0.control_dim()
    }
    fn step(&self, x: &[f64], u: &[f64], next: &mut [f64]) {
        self.inner().0.step(x, u, next)
    }
    fn process_noise(&self) -> f64 {
        self.inner().0.process_noise()
    }
}

impl Cost for Environment {
    fn running(&self, x: &[f64], u: &[f64]) -> f64 {
        self.inner().1.running(x, u)
    }
    fn terminal(&self, x: &[f64]) -> f64 {
        self.inner().1.terminal(x)
    }
}
