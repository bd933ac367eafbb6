//! Guided diffusion planning under a kernel-density demonstration prior.
//!
//! A plan is a flat vector of per-step `[state, action]` blocks. Each reverse
//! step draws `τ^{i−1} ~ N(μ + αΣ∇E(μ), Σ)` where `μ` is the reverse-kernel mean
//! of the analytic prior score and `Σ` is the sampler's step variance, then
//! overwrites the first state slots with the observed state. Execution takes
//! the first action of the fully denoised plan and replans.

// redundant when another crate in the graph links std
#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use rand::Rng;

use crate::diffusion::{analytic_score, reverse_kernel, KdeDataModel, NoiseSchedule, Sampler};
use crate::envs::{Cost, DeltaSystem, Dynamics, PointMassNav};
use crate::rng::standard_normal;
use crate::{EnergyModel, Error, Result, RunSeed, StreamRng};

/// Slot layout `[s_0, a_0, s_1, a_1, …, s_{H−1}, a_{H−1}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryLayout {
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
}

impl TrajectoryLayout {
    pub fn new(state_dim: usize, action_dim: usize, horizon: usize) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 || horizon == 0 {
            return Err(Error::invalid("layout", "dimensions and horizon must be >= 1"));
        }
        Ok(TrajectoryLayout {
            state_dim,
            action_dim,
            horizon,
        })
    }

    pub fn block(&self) -> usize {
        self.state_dim + self.action_dim
    }

    pub fn len(&self) -> usize {
        self.block() * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_slots(&self, t: usize) -> Range<usize> {
        let start = t * self.block();
        start..start + self.state_dim
    }

    pub fn action_slots(&self, t: usize) -> Range<usize> {
        let start = t * self.block() + self.state_dim;
        start..start + self.action_dim
    }

    pub fn state<'a>(&self, x: &'a [f64], t: usize) -> &'a [f64] {
        &x[self.state_slots(t)]
    }

    pub fn action<'a>(&self, x: &'a [f64], t: usize) -> &'a [f64] {
        &x[self.action_slots(t)]
    }

    /// Write `s` into the `s_0` slots.
    pub fn clamp(&self, x: &mut [f64], s: &[f64]) {
        x[self.state_slots(0)].copy_from_slice(s);
    }

    /// Interleave per-step states and actions into one plan vector.
    pub fn pack(&self, states: &[f64], actions: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim("states", self.state_dim * self.horizon, states.len())?;
        Error::check_dim("actions", self.action_dim * self.horizon, actions.len())?;
        let mut out = Vec::with_capacity(self.len());
        for t in 0..self.horizon {
            out.extend_from_slice(&states[t * self.state_dim..(t + 1) * self.state_dim]);
            out.extend_from_slice(&actions[t * self.action_dim..(t + 1) * self.action_dim]);
        }
        Ok(out)
    }
}

/// A plan vector at diffusion step `step` (0 = fully denoised).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPlan {
    pub layout: TrajectoryLayout,
    pub values: Vec<f64>,
    pub step: usize,
}

impl TrajectoryPlan {
    pub fn new(layout: TrajectoryLayout, values: Vec<f64>, step: usize) -> Result<Self> {
        Error::check_dim("plan", layout.len(), values.len())?;
        Ok(TrajectoryPlan { layout, values, step })
    }

    pub fn initial_state(&self) -> &[f64] {
        self.layout.state(&self.values, 0)
    }

    pub fn first_action(&self) -> &[f64] {
        self.layout.action(&self.values, 0)
    }

    pub fn clamp(&mut self, s: &[f64]) {
        self.layout.clamp(&mut self.values, s);
    }
}

/// Guidance scale, energy and step covariance for the reverse loop.
#[derive(Debug, Clone)]
pub struct GuidanceConfig<E> {
    /// α ≥ 0
    pub scale: f64,
    pub energy: E,
    pub sampler: Sampler,
    /// Isotropic Σ used instead of the sampler's step variance.
    pub covariance: Option<f64>,
    /// Central-difference step when the energy has no analytic gradient.
    pub fd_step: f64,
}

impl<E: EnergyModel> GuidanceConfig<E> {
    pub fn new(scale: f64, energy: E, sampler: Sampler) -> Result<Self> {
        let cfg = GuidanceConfig {
            scale,
            energy,
            sampler,
            covariance: None,
            fd_step: 1e-5,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return Err(Error::invalid("alpha", "must be finite and >= 0"));
        }
        if let Some(c) = self.covariance {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::invalid("covariance", "must be finite and >= 0"));
            }
        }
        if !(self.fd_step.is_finite() && self.fd_step > 0.0) {
            return Err(Error::invalid("fd_step", "must be finite and > 0"));
        }
        Ok(())
    }

    /// `∇E(x)`, analytic if provided, else central differences per slot.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        if let Some(g) = self.energy.gradient(x) {
            return g;
        }
        let h = self.fd_step;
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|k| {
                probe[k] = x[k] + h;
                let up = self.energy.energy(&probe);
                probe[k] = x[k] - h;
                let down = self.energy.energy(&probe);
                probe[k] = x[k];
                (up - down) / (2.0 * h)
            })
            .collect()
    }
}

/// Posterior-mean denoiser: reverse-kernel mean with zero noise under the
/// analytic prior score at step `i`.
pub fn denoise_mean(
    prior: &KdeDataModel,
    schedule: &NoiseSchedule,
    sampler: Sampler,
    x: &[f64],
    i: usize,
) -> Result<Vec<f64>> {
    let score = analytic_score(prior, schedule, i, x)?;
    Ok(reverse_kernel(schedule, sampler, i, x, &score)?.0)
}

/// One guided reverse step with its pieces exposed.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidedStep {
    /// unguided mean μ
    pub mean: Vec<f64>,
    /// αΣ∇E(μ)
    pub shift: Vec<f64>,
    pub variance: f64,
    pub plan: TrajectoryPlan,
}

/// `τ^{i−1} = μ + αΣ∇E(μ) + √Σ z`, then clamp `s_0 := s`.
///
/// `noise` is the standard normal draw `z`, passed in so guided and unguided
/// steps can share it.
pub fn guided_reverse_step<E: EnergyModel>(
    plan: &TrajectoryPlan,
    prior: &KdeDataModel,
    schedule: &NoiseSchedule,
    guidance: &GuidanceConfig<E>,
    s: &[f64],
    noise: &[f64],
) -> Result<GuidedStep> {
    let i = plan.step;
    Error::check_dim("prior", plan.layout.len(), prior.dim())?;
    Error::check_dim("observed state", plan.layout.state_dim, s.len())?;
    Error::check_dim("noise", plan.values.len(), noise.len())?;
    let score = analytic_score(prior, schedule, i, &plan.values)?;
    let (mean, kernel_var) = reverse_kernel(schedule, guidance.sampler, i, &plan.values, &score)?;
    let variance = guidance.covariance.unwrap_or(kernel_var);
    let shift = if guidance.scale == 0.0 {
        vec![0.0; mean.len()]
    } else {
        let grad = guidance.gradient(&mean);
        Error::check_dim("guidance gradient", mean.len(), grad.len())?;
        let bad: Vec<usize> = (0..grad.len()).filter(|&k| !grad[k].is_finite()).collect();
        if !bad.is_empty() {
            return Err(Error::GuidanceFailure { slots: bad });
        }
        grad.iter().map(|g| guidance.scale * variance * g).collect()
    };
    let sd = variance.sqrt();
    let values = mean
        .iter()
        .zip(&shift)
        .zip(noise)
        .map(|((m, d), z)| m + d + sd * z)
        .collect();
    let mut next = TrajectoryPlan {
        layout: plan.layout,
        values,
        step: i - 1,
    };
    next.clamp(s);
    Ok(GuidedStep {
        mean,
        shift,
        variance,
        plan: next,
    })
}

/// Full guided reverse loop from a fresh prior draw, conditioned on `s`.
///
/// Plan `index` draws from its own stream of `seed`.
pub fn plan_trajectory<E: EnergyModel>(
    layout: TrajectoryLayout,
    prior: &KdeDataModel,
    schedule: &NoiseSchedule,
    guidance: &GuidanceConfig<E>,
    s: &[f64],
    seed: &RunSeed,
    index: u64,
) -> Result<TrajectoryPlan> {
    guidance.validate()?;
    let mut rng = seed.rng(index);
    let prior_sd = schedule.prior_variance().sqrt();
    let values = (0..layout.len()).map(|_| prior_sd * standard_normal(&mut rng)).collect();
    let mut plan = TrajectoryPlan::new(layout, values, schedule.steps())?;
    plan.clamp(s);
    let mut z = vec![0.0; layout.len()];
    while plan.step > 0 {
        z.iter_mut().for_each(|v| *v = standard_normal(&mut rng));
        plan = guided_reverse_step(&plan, prior, schedule, guidance, s, &z)?.plan;
    }
    Ok(plan)
}

/// Environment surface needed to execute plans.
pub trait PlanningEnv: Dynamics + Cost {
    fn goal_distance(&self, s: &[f64]) -> f64;
    /// Whether moving `from → to` enters a forbidden region.
    fn penetrates(&self, _from: &[f64], _to: &[f64]) -> bool {
        false
    }
}

impl PlanningEnv for PointMassNav {
    fn goal_distance(&self, s: &[f64]) -> f64 {
        PointMassNav::goal_distance(self, s)
    }
    fn penetrates(&self, from: &[f64], to: &[f64]) -> bool {
        self.segment_penetrates(from, to)
    }
}

impl PlanningEnv for DeltaSystem {
    fn goal_distance(&self, s: &[f64]) -> f64 {
        self.terminal(s).sqrt()
    }
}

/// Guidance energy `−J` of the plan's actions rolled out from its own `s_0`.
///
/// The plan's state slots beyond `s_0` do not enter.
#[derive(Debug, Clone)]
pub struct RolloutGuidance<'a, D: ?Sized> {
    pub env: &'a D,
    pub layout: TrajectoryLayout,
}

impl<D: Dynamics + Cost + ?Sized> EnergyModel for RolloutGuidance<'_, D> {
    fn dim(&self) -> usize {
        self.layout.len()
    }

    fn energy(&self, x: &[f64]) -> f64 {
        let mut s = self.layout.state(x, 0).to_vec();
        let mut next = vec![0.0; s.len()];
        let mut cost = 0.0;
        for t in 0..self.layout.horizon {
            let a = self.layout.action(x, t);
            cost += self.env.running(&s, a);
            self.env.step(&s, a, &mut next);
            core::mem::swap(&mut s, &mut next);
        }
        cost += self.env.terminal(&s);
        if cost.is_finite() {
            -cost
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Navigation guidance with bounded gradients: the plan's actions are rolled
/// out from its `s_0` and scored by
/// `−Σ_t [w_g ‖ŝ_t − g‖ + (w_o/k) softplus(k (r + m − d_obs(ŝ_t)))]`.
///
/// Both terms are Lipschitz in the states, so `αΣ∇E` cannot run away.
#[derive(Debug, Clone, PartialEq)]
pub struct NavigationGuidance {
    pub env: PointMassNav,
    pub layout: TrajectoryLayout,
    pub goal_weight: f64,
    pub obstacle_weight: f64,
    /// extra clearance m added to the obstacle radius
    pub margin: f64,
    pub sharpness: f64,
}

impl NavigationGuidance {
    pub fn new(env: PointMassNav, horizon: usize, settings: &NavigationGuidanceSettings) -> Result<Self> {
        Ok(NavigationGuidance {
            env,
            layout: TrajectoryLayout::new(2, 2, horizon)?,
            goal_weight: settings.goal_weight,
            obstacle_weight: settings.obstacle_weight,
            margin: settings.margin,
            sharpness: settings.sharpness,
        })
    }
}

/// Weights of [`NavigationGuidance`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct NavigationGuidanceSettings {
    pub goal_weight: f64,
    pub obstacle_weight: f64,
    pub margin: f64,
    pub sharpness: f64,
}

impl Default for NavigationGuidanceSettings {
    fn default() -> Self {
        NavigationGuidanceSettings {
            goal_weight: 1.0,
            obstacle_weight: 100.0,
            margin: 0.1,
            sharpness: 20.0,
        }
    }
}

impl EnergyModel for NavigationGuidance {
    fn dim(&self) -> usize {
        self.layout.len()
    }

    fn energy(&self, x: &[f64]) -> f64 {
        let l = &self.layout;
        let mut s = [x[0], x[1]];
        let k = self.sharpness;
        let mut total = 0.0;
        for t in 0..l.horizon {
            let v = self.env.clip_velocity(l.action(x, t));
            s = [s[0] + self.env.dt * v[0], s[1] + self.env.dt * v[1]];
            let depth = self.env.obstacle_radius + self.margin - self.env.obstacle_distance(&s);
            let z = k * depth;
            let barrier = if z > 30.0 { z } else { z.exp().ln_1p() };
            total += self.goal_weight * self.env.goal_distance(&s) + self.obstacle_weight * barrier / k;
        }
        if total.is_finite() {
            -total
        } else {
            f64::NEG_INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EpisodeSettings {
    pub initial_state: Vec<f64>,
    /// Uniform jitter half-width added to each initial coordinate.
    pub initial_jitter: f64,
    pub goal_radius: f64,
    pub max_steps: usize,
}

impl Default for EpisodeSettings {
    fn default() -> Self {
        EpisodeSettings {
            initial_state: vec![0.0, 0.0],
            initial_jitter: 0.02,
            goal_radius: 0.1,
            max_steps: 80,
        }
    }
}

impl EpisodeSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps", "must be >= 1"));
        }
        if !(self.goal_radius.is_finite() && self.goal_radius > 0.0) {
            return Err(Error::invalid("goal_radius", "must be finite and > 0"));
        }
        if !(self.initial_jitter.is_finite() && self.initial_jitter >= 0.0) {
            return Err(Error::invalid("initial_jitter", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Executed path and outcome of one receding-horizon episode.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeLog {
    pub episode: usize,
    pub state_dim: usize,
    /// executed states, flat, `steps + 1` of them
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub step_costs: Vec<f64>,
    pub goal_distances: Vec<f64>,
    pub collisions: usize,
    pub reached_goal: bool,
    /// the first denoised plan of the episode
    pub first_plan: Vec<f64>,
}

impl EpisodeLog {
    pub fn steps(&self) -> usize {
        self.step_costs.len()
    }

    pub fn total_cost(&self) -> f64 {
        self.step_costs.iter().sum()
    }

    pub fn final_goal_distance(&self) -> f64 {
        *self.goal_distances.last().expect("at least the initial distance")
    }

    pub fn success(&self) -> bool {
        self.reached_goal && self.collisions == 0
    }
}

/// Run one episode: replan from the observed state, execute `a_0`, repeat
/// until the goal radius is entered or the step cap runs out.
#[allow(clippy::too_many_arguments)]
pub fn run_episode<P, E>(
    env: &P,
    prior: &KdeDataModel,
    schedule: &NoiseSchedule,
    layout: TrajectoryLayout,
    guidance: &GuidanceConfig<E>,
    settings: &EpisodeSettings,
    seed: &RunSeed,
    episode: usize,
) -> Result<EpisodeLog>
where
    P: PlanningEnv + ?Sized,
    E: EnergyModel,
{
    settings.validate()?;
    Error::check_dim("initial state", env.state_dim(), settings.initial_state.len())?;
    Error::check_dim("layout state", env.state_dim(), layout.state_dim)?;
    Error::check_dim("layout action", env.control_dim(), layout.action_dim)?;
    let ep_seed = seed.substream(episode as u64);
    let mut jitter_rng = ep_seed.rng(u64::MAX);
    let mut s: Vec<f64> = settings
        .initial_state
        .iter()
        .map(|v| v + settings.initial_jitter * (2.0 * jitter_rng.random::<f64>() - 1.0))
        .collect();
    let mut log = EpisodeLog {
        episode,
        state_dim: s.len(),
        states: s.clone(),
        actions: Vec::new(),
        step_costs: Vec::new(),
        goal_distances: vec![env.goal_distance(&s)],
        collisions: 0,
        reached_goal: env.goal_distance(&s) <= settings.goal_radius,
        first_plan: Vec::new(),
    };
    let mut next = vec![0.0; s.len()];
    let mut t = 0;
    while !log.reached_goal && t < settings.max_steps {
        let plan = plan_trajectory(layout, prior, schedule, guidance, &s, &ep_seed, t as u64)?;
        if t == 0 {
            log.first_plan = plan.values.clone();
        }
        let a = plan.first_action();
        env.step(&s, a, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("executed state"));
        }
        log.step_costs.push(env.running(&s, a));
        if env.penetrates(&s, &next) {
            log.collisions += 1;
        }
        log.actions.extend_from_slice(a);
        core::mem::swap(&mut s, &mut next);
        log.states.extend_from_slice(&s);
        let d = env.goal_distance(&s);
        log.goal_distances.push(d);
        log.reached_goal = d <= settings.goal_radius;
        t += 1;
    }
    Ok(log)
}

/// `episodes` independent episodes, serially; see [`run_episode`].
#[allow(clippy::too_many_arguments)]
pub fn plan_and_execute<P, E>(
    env: &P,
    prior: &KdeDataModel,
    schedule: &NoiseSchedule,
    layout: TrajectoryLayout,
    guidance: &GuidanceConfig<E>,
    settings: &EpisodeSettings,
    episodes: usize,
    seed: &RunSeed,
) -> Result<Vec<EpisodeLog>>
where
    P: PlanningEnv + ?Sized,
    E: EnergyModel,
{
    (0..episodes)
        .map(|e| run_episode(env, prior, schedule, layout, guidance, settings, seed, e))
        .collect()
}

/// Synthetic demonstrations for [`PointMassNav`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DemoSettings {
    pub count: usize,
    pub horizon: usize,
    /// steps from start to goal on each full path
    pub path_steps: usize,
    pub start: [f64; 2],
    /// half-width of the uniform start jitter
    pub start_jitter: f64,
    /// detour peak offset range from the start-goal line
    pub detour: [f64; 2],
    /// reject paths that come closer than `clearance` to the obstacle edge
    pub avoid_obstacle: bool,
    pub clearance: f64,
    /// per-state position noise std
    pub noise: f64,
    pub bandwidth: f64,
    pub seed: u64,
}

impl Default for DemoSettings {
    fn default() -> Self {
        DemoSettings {
            count: 200,
            horizon: 8,
            path_steps: 40,
            start: [0.0, 0.0],
            start_jitter: 0.05,
            detour: [0.45, 0.65],
            avoid_obstacle: true,
            clearance: 0.05,
            noise: 0.003,
            bandwidth: 0.05,
            seed: 7,
        }
    }
}

/// Minimum-jerk blend `10s³ − 15s⁴ + 6s⁵`.
fn min_jerk(s: f64) -> f64 {
    s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// One noisy detour path from a jittered start to the goal, `path_steps + 1`
/// states, bending to a random side of the start-goal line.
pub fn demonstration_path(env: &PointMassNav, settings: &DemoSettings, rng: &mut StreamRng) -> Vec<[f64; 2]> {
    let n = settings.path_steps;
    loop {
        let start = [
            settings.start[0] + uniform(rng, -settings.start_jitter, settings.start_jitter),
            settings.start[1] + uniform(rng, -settings.start_jitter, settings.start_jitter),
        ];
        let goal = env.goal;
        let (dx, dy) = (goal[0] - start[0], goal[1] - start[1]);
        let len = (dx * dx + dy * dy).sqrt();
        let normal = [-dy / len, dx / len];
        let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let peak = side * uniform(rng, settings.detour[0], settings.detour[1]);
        // shift the detour peak slightly along the path for variety
        let skew = uniform(rng, -0.1, 0.1);
        let mut path = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let s = k as f64 / n as f64;
            let along = min_jerk(s);
            let w = (PI * (s + skew * (PI * s).sin())).sin().powi(2);
            let mut p = [
                start[0] + dx * along + normal[0] * peak * w,
                start[1] + dy * along + normal[1] * peak * w,
            ];
            if k > 0 && k < n {
                p[0] += settings.noise * standard_normal(rng);
                p[1] += settings.noise * standard_normal(rng);
            }
            path.push(p);
        }
        if !settings.avoid_obstacle {
            return path;
        }
        let safe = path.windows(2).all(|w| {
            !env.segment_penetrates(&w[0], &w[1])
                && env.obstacle_distance(&w[1]) >= env.obstacle_radius + settings.clearance
        });
        if safe {
            return path;
        }
    }
}

/// `count` plan windows, each cut from its own demonstration path at a
/// random start step; windows running past the goal hold position there.
pub fn navigation_demonstrations(env: &PointMassNav, settings: &DemoSettings) -> Result<KdeDataModel> {
    if settings.count == 0 || settings.path_steps == 0 {
        return Err(Error::invalid("demonstrations", "count and path_steps must be >= 1"));
    }
    let layout = TrajectoryLayout::new(2, 2, settings.horizon)?;
    let seed = RunSeed::new(settings.seed);
    let mut points = Vec::with_capacity(settings.count * layout.len());
    for k in 0..settings.count {
        let mut rng = seed.rng(k as u64);
        let path = demonstration_path(env, settings, &mut rng);
        let t0 = rng.random_range(0..=settings.path_steps);
        let at = |t: usize| path[t.min(settings.path_steps)];
        for t in t0..t0 + settings.horizon {
            let (p, q) = (at(t), at(t + 1));
            points.extend_from_slice(&p);
            points.push((q[0] - p[0]) / env.dt);
            points.push((q[1] - p[1]) / env.dt);
        }
    }
    KdeDataModel::new(layout.len(), points, settings.bandwidth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::FnEnergy;

    fn ve() -> NoiseSchedule {
        NoiseSchedule::ve(vec![0.1, 0.2, 0.4]).unwrap()
    }

    #[test]
    fn layout_slots() {
        let l = TrajectoryLayout::new(2, 1, 3).unwrap();
        assert_eq!(l.len(), 9);
        assert_eq!(l.state_slots(1), 3..5);
        assert_eq!(l.action_slots(2), 8..9);
        let x = l.pack(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]).unwrap();
        assert_eq!(x, [1.0, 2.0, 7.0, 3.0, 4.0, 8.0, 5.0, 6.0, 9.0]);
    }

    #[test]
    fn denoise_fixed_point_and_symmetric_pair() {
        let point = KdeDataModel::new(2, vec![0.3, -0.2], 0.0).unwrap();
        let m = denoise_mean(&point, &ve(), Sampler::Ancestral, &[0.3, -0.2], 1).unwrap();
        assert_eq!(m, [0.3, -0.2]);

        // at i = 1 the VE mean is x + σ_1² s = posterior mean of x0
        let pair = KdeDataModel::new(1, vec![-1.0, 1.0], 0.0).unwrap();
        let m = denoise_mean(&pair, &ve(), Sampler::Ancestral, &[0.0], 1).unwrap();
        assert!(m[0].abs() < 1e-15);
        let pair = KdeDataModel::new(1, vec![0.2, 0.6], 0.0).unwrap();
        let m = denoise_mean(&pair, &ve(), Sampler::Ancestral, &[0.4], 1).unwrap();
        assert!((m[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn quadratic_guidance_shift() {
        let layout = TrajectoryLayout::new(1, 1, 2).unwrap();
        let prior = KdeDataModel::new(4, vec![0.0; 4], 0.1).unwrap();
        let goal = [1.0, -1.0, 2.0, 0.5];
        let energy = FnEnergy::new(4, move |x: &[f64]| -0.5 * x.iter().zip(&goal).map(|(a, g)| (a - g).powi(2)).sum::<f64>());
        let guidance = GuidanceConfig::new(3.0, energy, Sampler::Ancestral).unwrap();
        let plan = TrajectoryPlan::new(layout, vec![0.5, 0.1, -0.3, 0.2], 3).unwrap();
        let z = [0.3, -1.0, 0.7, 0.2];
        let step = guided_reverse_step(&plan, &prior, &ve(), &guidance, &[0.25], &z).unwrap();
        for (k, g) in goal.iter().enumerate() {
            let expect = 3.0 * step.variance * (g - step.mean[k]);
            assert!((step.shift[k] - expect).abs() < 1e-8);
        }
        assert_eq!(step.plan.initial_state(), [0.25]);
        assert_eq!(step.plan.step, 2);
        let mut again = step.plan.clone();
        again.clamp(&[0.25]);
        assert_eq!(again, step.plan);
    }

    #[test]
    fn non_finite_guidance_names_slots() {
        let layout = TrajectoryLayout::new(1, 1, 1).unwrap();
        let prior = KdeDataModel::new(2, vec![0.0, 0.0], 0.1).unwrap();
        let energy = FnEnergy::new(2, |x: &[f64]| if x[1] > 0.0 { f64::NAN } else { 0.0 });
        let guidance = GuidanceConfig::new(1.0, energy, Sampler::Ancestral).unwrap();
        let plan = TrajectoryPlan::new(layout, vec![0.0, 0.0], 1).unwrap();
        let err = guided_reverse_step(&plan, &prior, &ve(), &guidance, &[0.0], &[0.0, 0.0]).unwrap_err();
        assert_eq!(err, Error::GuidanceFailure { slots: vec![1] });
    }

    #[test]
    fn delta_env_at_goal_completes_immediately() {
        let env = DeltaSystem {
            dim: 1,
            goal: vec![0.0],
        };
        let layout = TrajectoryLayout::new(1, 1, 2).unwrap();
        let prior = KdeDataModel::new(4, vec![0.0; 4], 0.05).unwrap();
        let guidance = GuidanceConfig::new(0.0, RolloutGuidance { env: &env, layout }, Sampler::Ancestral).unwrap();
        let settings = EpisodeSettings {
            initial_state: vec![0.0],
            initial_jitter: 0.0,
            goal_radius: 0.1,
            max_steps: 5,
        };
        let logs = plan_and_execute(&env, &prior, &ve(), layout, &guidance, &settings, 2, &RunSeed::new(1)).unwrap();
        assert!(logs.iter().all(|l| l.success() && l.steps() == 0));
    }

    #[test]
    fn demonstrations_avoid_obstacle() {
        let env = PointMassNav::default();
        let settings = DemoSettings {
            count: 20,
            ..DemoSettings::default()
        };
        let data = navigation_demonstrations(&env, &settings).unwrap();
        let layout = TrajectoryLayout::new(2, 2, settings.horizon).unwrap();
        assert_eq!(data.len(), 20);
        for w in data.points() {
            for t in 0..layout.horizon {
                let s = layout.state(w, t);
                let a = layout.action(w, t);
                let next = [s[0] + env.dt * a[0], s[1] + env.dt * a[1]];
                assert!(!env.segment_penetrates(s, &next));
                if t + 1 < layout.horizon {
                    let n = layout.state(w, t + 1);
                    assert!((n[0] - next[0]).abs() < 1e-12 && (n[1] - next[1]).abs() < 1e-12);
                }
            }
        }
        assert_eq!(navigation_demonstrations(&env, &settings).unwrap(), data);
    }
}
