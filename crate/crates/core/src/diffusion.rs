//! VE/VP noise schedules, the exact score of a Gaussian kernel-density data
//! model, and the discretized reverse samplers.
//!
//! Step indices run `1..=N`; index 0 is the data distribution
//! (`σ_0 = 0` for VE, `ᾱ_0 = 1` for VP). The score model is analytic: for data
//! points `x_k` with bandwidth `h`, the marginal at step `i` is the mixture
//! `(1/K) Σ_k N(x; a_i x_k, (v_i + a_i² h²) I)` where `(a_i, v_i)` are the
//! perturbation kernel's mean scale and variance.

// redundant when another crate in the graph links std
#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use crate::numeric::{log_sum_exp, normalized_exp};
use crate::rng::standard_normal;
use crate::smoothed::{Evaluation, QuadratureGrid, SmoothedEnergy};
use crate::{EnergyModel, Error, NoiseKernel, Result, RunSeed};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ScheduleKind {
    Ve,
    Vp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    /// σ_1..σ_N (VE) or β_1..β_N (VP)
    values: Vec<f64>,
    /// ᾱ_1..ᾱ_N, VP only
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Variance-exploding schedule from strictly increasing positive σ's.
    pub fn ve(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::Empty("VE schedule"));
        }
        if !(sigmas[0].is_finite() && sigmas[0] > 0.0) || sigmas.windows(2).any(|w| !(w[1] > w[0] && w[1].is_finite())) {
            return Err(Error::invalid("sigmas", "must be positive and strictly increasing"));
        }
        Ok(NoiseSchedule {
            kind: ScheduleKind::Ve,
            values: sigmas,
            alpha_bars: Vec::new(),
        })
    }

    /// Geometric σ from `sigma_min` to `sigma_max` over `steps` levels.
    pub fn ve_geometric(sigma_min: f64, sigma_max: f64, steps: usize) -> Result<Self> {
        if steps < 2 || !(sigma_min > 0.0 && sigma_max > sigma_min) {
            return Err(Error::invalid("sigmas", "need steps >= 2 and 0 < sigma_min < sigma_max"));
        }
        let ratio = (sigma_max / sigma_min).ln() / (steps - 1) as f64;
        Self::ve((0..steps).map(|k| sigma_min * (ratio * k as f64).exp()).collect())
    }

    /// Variance-preserving schedule from `β_i ∈ [0, 1)`.
    pub fn vp(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Empty("VP schedule"));
        }
        if betas.iter().any(|b| !(*b >= 0.0 && *b < 1.0)) {
            return Err(Error::invalid("betas", "must lie in [0, 1)"));
        }
        let mut acc = 1.0;
        let alpha_bars = betas
            .iter()
            .map(|b| {
                acc *= 1.0 - b;
                acc
            })
            .collect();
        Ok(NoiseSchedule {
            kind: ScheduleKind::Vp,
            values: betas,
            alpha_bars,
        })
    }

    /// Linear β from `beta_min` to `beta_max` over `steps` levels.
    pub fn vp_linear(beta_min: f64, beta_max: f64, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::invalid("steps", "must be >= 2"));
        }
        let d = (beta_max - beta_min) / (steps - 1) as f64;
        Self::vp((0..steps).map(|k| beta_min + d * k as f64).collect())
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn steps(&self) -> usize {
        self.values.len()
    }

    fn check_step(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.steps() {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.steps(),
            })
        } else {
            Ok(())
        }
    }

    /// σ_i for VE (σ_0 = 0).
    pub fn sigma(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.values[i - 1]
        }
    }

    /// β_i for VP.
    pub fn beta(&self, i: usize) -> f64 {
        self.values[i - 1]
    }

    /// ᾱ_i for VP (ᾱ_0 = 1).
    pub fn alpha_bar(&self, i: usize) -> f64 {
        if i == 0 {
            1.0
        } else {
            self.alpha_bars[i - 1]
        }
    }

    /// Mean scale `a_i` and variance `v_i` of `p_i(x | x0) = N(a_i x0, v_i I)`,
    /// for `i ∈ 0..=N`.
    pub fn kernel_coefficients(&self, i: usize) -> (f64, f64) {
        match self.kind {
            ScheduleKind::Ve => (1.0, self.sigma(i) * self.sigma(i)),
            ScheduleKind::Vp => {
                let ab = self.alpha_bar(i);
                (ab.sqrt(), 1.0 - ab)
            }
        }
    }

    /// Variance of the sampler's initial draw: `σ_N²` (VE) or 1 (VP).
    pub fn prior_variance(&self) -> f64 {
        match self.kind {
            ScheduleKind::Ve => self.sigma(self.steps()).powi(2),
            ScheduleKind::Vp => 1.0,
        }
    }
}

/// `(mean, variance)` of the perturbation kernel `p_i(x | x0)`, `1 ≤ i ≤ N`.
pub fn perturbation_kernel_params(schedule: &NoiseSchedule, i: usize, x0: &[f64]) -> Result<(Vec<f64>, f64)> {
    schedule.check_step(i)?;
    let (a, v) = schedule.kernel_coefficients(i);
    Ok((x0.iter().map(|x| a * x).collect(), v))
}

/// Kernel-density data distribution `(1/K) Σ_k N(x_k, h² I)`; `h = 0` gives
/// the empirical distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeDataModel {
    dim: usize,
    points: Vec<f64>,
    bandwidth: f64,
}

impl KdeDataModel {
    pub fn new(dim: usize, points: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::invalid("data", "need at least one point of the declared dimension"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("data points"));
        }
        if !(bandwidth.is_finite() && bandwidth >= 0.0) {
            return Err(Error::invalid("bandwidth", "must be finite and >= 0"));
        }
        Ok(KdeDataModel {
            dim,
            points,
            bandwidth,
        })
    }

    pub fn from_scalars(points: &[f64], bandwidth: f64) -> Result<Self> {
        Self::new(1, points.to_vec(), bandwidth)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn points(&self) -> core::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dim)
    }

    /// Per-component log densities of `N(x; a x_k, s² I)` plus `-ln K`.
    fn component_logs(&self, x: &[f64], scale: f64, variance: f64) -> Vec<f64> {
        let d = self.dim as f64;
        let norm = -0.5 * d * (LN_2PI + variance.ln()) - (self.len() as f64).ln();
        self.points()
            .map(|p| {
                let sq: f64 = p.iter().zip(x).map(|(pk, xk)| (xk - scale * pk).powi(2)).sum();
                norm - 0.5 * sq / variance
            })
            .collect()
    }

    fn mixture_variance(&self, scale: f64, variance: f64) -> f64 {
        variance + scale * scale * self.bandwidth * self.bandwidth
    }

    /// `log p_data(x)`; needs `h > 0`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let logs = self.component_logs(x, 1.0, self.bandwidth * self.bandwidth);
        log_sum_exp(&logs).unwrap_or(f64::NEG_INFINITY)
    }

    pub fn second_moment(&self) -> f64 {
        let mean_sq: f64 = self.points.iter().map(|v| v * v).sum::<f64>() / self.len() as f64;
        mean_sq + self.dim as f64 * self.bandwidth * self.bandwidth
    }
}

/// `log p_i(x)` of the noised mixture.
pub fn log_marginal(data: &KdeDataModel, schedule: &NoiseSchedule, i: usize, x: &[f64]) -> Result<f64> {
    if i > schedule.steps() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: schedule.steps(),
        });
    }
    Error::check_dim("x", data.dim(), x.len())?;
    let (a, v) = schedule.kernel_coefficients(i);
    let s2 = data.mixture_variance(a, v);
    if s2 <= 0.0 {
        return Err(Error::invalid("bandwidth", "marginal is singular at this step"));
    }
    log_sum_exp(&data.component_logs(x, a, s2))
}

/// Exact score `∇_x log p_i(x)` of the noised mixture.
pub fn analytic_score(data: &KdeDataModel, schedule: &NoiseSchedule, i: usize, x: &[f64]) -> Result<Vec<f64>> {
    if i > schedule.steps() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: schedule.steps(),
        });
    }
    Error::check_dim("x", data.dim(), x.len())?;
    Ok(mixture_score(data, schedule, i, x))
}

fn mixture_score(data: &KdeDataModel, schedule: &NoiseSchedule, i: usize, x: &[f64]) -> Vec<f64> {
    let (a, v) = schedule.kernel_coefficients(i);
    let s2 = data.mixture_variance(a, v);
    let mut out = vec![0.0; x.len()];
    if data.len() == 1 {
        for ((o, xk), p) in out.iter_mut().zip(x).zip(data.point(0)) {
            *o = (a * p - xk) / s2;
        }
        return out;
    }
    let logs = data.component_logs(x, a, s2);
    let r = normalized_exp(&logs).expect("finite mixture");
    for (p, rk) in data.points().zip(&r) {
        for ((o, xk), pk) in out.iter_mut().zip(x).zip(p) {
            *o += rk * (a * pk - xk);
        }
    }
    out.iter_mut().for_each(|o| *o /= s2);
    out
}

/// Score model `s(x, i) ≈ ∇_x log p_i(x)`.
pub trait ScoreFunction {
    fn dim(&self) -> usize;
    fn score(&self, x: &[f64], step: usize) -> Vec<f64>;
    /// Schedule family the score was built for, if any.
    fn kind(&self) -> Option<ScheduleKind> {
        None
    }
}

/// The analytic mixture score of a [`KdeDataModel`] under a schedule.
#[derive(Debug, Clone, Copy)]
pub struct KdeScore<'a> {
    pub data: &'a KdeDataModel,
    pub schedule: &'a NoiseSchedule,
}

impl ScoreFunction for KdeScore<'_> {
    fn dim(&self) -> usize {
        self.data.dim()
    }
    fn score(&self, x: &[f64], step: usize) -> Vec<f64> {
        mixture_score(self.data, self.schedule, step, x)
    }
    fn kind(&self) -> Option<ScheduleKind> {
        Some(self.schedule.kind())
    }
}

/// Score backed by a closure.
pub struct FnScore<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], usize) -> Vec<f64>> FnScore<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnScore { dim, f }
    }
}

impl<F: Fn(&[f64], usize) -> Vec<f64>> ScoreFunction for FnScore<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn score(&self, x: &[f64], step: usize) -> Vec<f64> {
        (self.f)(x, step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Sampler {
    #[default]
    Ancestral,
    ReverseDiffusion,
}

/// Mean and per-coordinate variance of the reverse kernel from step `i` to
/// `i − 1`, given the score `s = ∇ log p_i(x)`:
///
/// * VE ancestral: `x + (σ_i² − σ_{i−1}²) s`, variance `σ_{i−1}²(σ_i² − σ_{i−1}²)/σ_i²`
/// * VE reverse diffusion: same mean, variance `σ_i² − σ_{i−1}²`
/// * VP ancestral: `(x + β_i s)/√(1 − β_i)`, variance `β_i`
/// * VP reverse diffusion: `(2 − √(1 − β_i)) x + β_i s`, variance `β_i`
pub fn reverse_kernel(
    schedule: &NoiseSchedule,
    sampler: Sampler,
    i: usize,
    x: &[f64],
    score: &[f64],
) -> Result<(Vec<f64>, f64)> {
    schedule.check_step(i)?;
    Error::check_dim("score", x.len(), score.len())?;
    Ok(reverse_kernel_unchecked(schedule, sampler, i, x, score))
}

fn reverse_kernel_unchecked(
    schedule: &NoiseSchedule,
    sampler: Sampler,
    i: usize,
    x: &[f64],
    score: &[f64],
) -> (Vec<f64>, f64) {
    match schedule.kind() {
        ScheduleKind::Ve => {
            let hi = schedule.sigma(i).powi(2);
            let lo = schedule.sigma(i - 1).powi(2);
            let gap = hi - lo;
            let mean = x.iter().zip(score).map(|(a, s)| a + gap * s).collect();
            let var = match sampler {
                Sampler::Ancestral => lo * gap / hi,
                Sampler::ReverseDiffusion => gap,
            };
            (mean, var)
        }
        ScheduleKind::Vp => {
            let beta = schedule.beta(i);
            let keep = (1.0 - beta).sqrt();
            let mean = match sampler {
                Sampler::Ancestral => x.iter().zip(score).map(|(a, s)| (a + beta * s) / keep).collect(),
                Sampler::ReverseDiffusion => x
                    .iter()
                    .zip(score)
                    .map(|(a, s)| (2.0 - keep) * a + beta * s)
                    .collect(),
            };
            (mean, beta)
        }
    }
}

fn check_kind<S: ScoreFunction + ?Sized>(schedule: &NoiseSchedule, score: &S) -> Result<()> {
    match score.kind() {
        Some(k) if k != schedule.kind() => Err(Error::ScheduleMismatch),
        _ => Ok(()),
    }
}

/// Run `paths` independent reverse chains from the prior down to step 0.
pub fn reverse_sample<S: ScoreFunction + ?Sized>(
    schedule: &NoiseSchedule,
    score: &S,
    sampler: Sampler,
    paths: usize,
    seed: &RunSeed,
) -> Result<Vec<Vec<f64>>> {
    check_kind(schedule, score)?;
    if paths == 0 {
        return Err(Error::invalid("paths", "must be >= 1"));
    }
    (0..paths as u64)
        .map(|p| Ok(reverse_path(schedule, score, sampler, seed, p)))
        .collect()
}

/// One reverse chain; path `index` draws from its own stream.
pub fn reverse_path<S: ScoreFunction + ?Sized>(
    schedule: &NoiseSchedule,
    score: &S,
    sampler: Sampler,
    seed: &RunSeed,
    index: u64,
) -> Vec<f64> {
    let mut rng = seed.rng(index);
    let prior_std = schedule.prior_variance().sqrt();
    let mut x: Vec<f64> = (0..score.dim()).map(|_| prior_std * standard_normal(&mut rng)).collect();
    for i in (1..=schedule.steps()).rev() {
        let s = score.score(&x, i);
        let (mean, var) = reverse_kernel_unchecked(schedule, sampler, i, &x, &s);
        let std = var.sqrt();
        for (xi, m) in x.iter_mut().zip(mean) {
            *xi = m + std * standard_normal(&mut rng);
        }
    }
    x
}

/// Denoising score-matching loss at step `i`:
/// `E ‖s(x̃, i) − ∇_x̃ log q(x̃ | x0)‖²` over data points and kernel noise.
///
/// Samples cycle through the data points; `x0` includes the bandwidth noise.
pub fn dsm_loss<S: ScoreFunction + ?Sized>(
    data: &KdeDataModel,
    schedule: &NoiseSchedule,
    i: usize,
    score: &S,
    samples: usize,
    seed: &RunSeed,
) -> Result<f64> {
    schedule.check_step(i)?;
    Error::check_dim("score", data.dim(), score.dim())?;
    if samples == 0 {
        return Err(Error::invalid("samples", "must be >= 1"));
    }
    let (a, v) = schedule.kernel_coefficients(i);
    if v <= 0.0 {
        return Err(Error::invalid("schedule", "kernel variance is zero at this step"));
    }
    let d = data.dim();
    let h = data.bandwidth();
    let sd = v.sqrt();
    let mut rng = seed.rng(0);
    let mut x0 = vec![0.0; d];
    let mut noisy = vec![0.0; d];
    let mut target = vec![0.0; d];
    let mut total = 0.0;
    for m in 0..samples {
        let p = data.point(m % data.len());
        for k in 0..d {
            x0[k] = p[k] + h * standard_normal(&mut rng);
            let mean = a * x0[k];
            noisy[k] = mean + sd * standard_normal(&mut rng);
            target[k] = (mean - noisy[k]) / v;
        }
        let s = score.score(&noisy, i);
        total += s.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / samples as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreIdentityReport {
    pub analytic: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub max_abs_diff: f64,
}

impl ScoreIdentityReport {
    /// `|a − b| ≤ tol · max(1, |a|)` in every coordinate.
    pub fn holds(&self, tolerance: f64) -> bool {
        self.analytic
            .iter()
            .zip(&self.smoothed)
            .all(|(a, b)| (a - b).abs() <= tolerance * a.abs().max(1.0))
    }
}

/// `E(y) = log p_data(y / a) − d ln a`, the data density pushed through the
/// kernel's mean scaling, so that `p_i = exp(E) ∗ N(0, v_i I)`.
struct ScaledDataEnergy<'a> {
    data: &'a KdeDataModel,
    scale: f64,
}

impl EnergyModel for ScaledDataEnergy<'_> {
    fn dim(&self) -> usize {
        self.data.dim()
    }
    fn energy(&self, y: &[f64]) -> f64 {
        let s2 = self.scale * self.scale * self.data.bandwidth().powi(2);
        log_sum_exp(&self.data.component_logs(y, self.scale, s2)).unwrap_or(f64::NEG_INFINITY)
    }
}

const IDENTITY_MAX_POINTS_1D: usize = 40_001;
const IDENTITY_MAX_POINTS_2D: usize = 1_201;

/// Computes `∇ log p_i(x)` twice: from the mixture formula and as the
/// gradient of the smoothed energy with `E := log p_data` (rescaled for VP)
/// and `φ := N(0, v_i I)` at `τ = 1`, by quadrature.
pub fn smoothed_score_identity_check(
    data: &KdeDataModel,
    schedule: &NoiseSchedule,
    i: usize,
    x: &[f64],
) -> Result<ScoreIdentityReport> {
    schedule.check_step(i)?;
    let d = data.dim();
    Error::check_dim("x", d, x.len())?;
    if d > 2 {
        return Err(Error::invalid("data", "quadrature check needs dimension <= 2"));
    }
    if data.bandwidth() <= 0.0 {
        return Err(Error::invalid("bandwidth", "smoothed-energy path needs h > 0"));
    }
    let (a, v) = schedule.kernel_coefficients(i);
    let kernel_sd = v.sqrt();
    let comp_sd = a * data.bandwidth();
    // cover the query window and every scaled data component
    let mut bounds = Vec::with_capacity(d);
    for axis in 0..d {
        let mut lo = x[axis] - 8.0 * kernel_sd;
        let mut hi = x[axis] + 8.0 * kernel_sd;
        for p in data.points() {
            lo = lo.min(a * p[axis] - 8.0 * comp_sd);
            hi = hi.max(a * p[axis] + 8.0 * comp_sd);
        }
        bounds.push((lo, hi));
    }
    let spacing = kernel_sd.min(comp_sd) / 1.5;
    let cap = if d == 1 { IDENTITY_MAX_POINTS_1D } else { IDENTITY_MAX_POINTS_2D };
    let counts: Vec<usize> = bounds
        .iter()
        .map(|(lo, hi)| (((hi - lo) / spacing).ceil() as usize + 1).clamp(64, cap))
        .collect();
    let grid = QuadratureGrid::new(&bounds, &counts)?;
    let energy = ScaledDataEnergy { data, scale: a };
    let kernel = NoiseKernel::isotropic(d, v, 1.0)?;
    let se = SmoothedEnergy::new(energy, kernel, Evaluation::Quadrature(grid))?;
    let smoothed = se.gradient(x)?;
    let analytic = analytic_score(data, schedule, i, x)?;
    let max_abs_diff = analytic
        .iter()
        .zip(&smoothed)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    Ok(ScoreIdentityReport {
        analytic,
        smoothed,
        max_abs_diff,
    })
}
