//! Smoothed energy `Ẽ(U) = τ · log ∫ exp(E(y)/τ) φ(U − y) dy` and its oracles.
//!
//! With this scaling `exp(Ẽ/τ)` is the Gibbs density convolved with φ, and the
//! gradient-ascent step `U + (1/τ) Σ ∇Ẽ(U)` is exactly the expected MPPI step.
//! At `τ = 1` it reduces to `log ∫ exp(E(y)) φ(U − y) dy`.
//!
//! Integrals are evaluated in log space, either by trapezoidal quadrature on a
//! uniform grid (`d ≤ 2`) or by Monte Carlo over kernel samples.

// redundant when another crate in the graph links std
#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::batch::sample_perturbations;
use crate::mppi::mppi_step;
use crate::numeric::{log_sum_exp, normalized_exp};
use crate::{ControlSequence, EnergyModel, Error, NoiseKernel, Result, RunSeed};

const MAX_QUADRATURE_DIM: usize = 2;
const MIN_POINTS: usize = 16;
/// Required clearance between a query point and the grid edge, in kernel
/// standard deviations.
pub const SUPPORT_MARGIN_SIGMAS: f64 = 6.0;

/// Uniform tensor grid with trapezoidal weights, `d ≤ 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    bounds: Vec<(f64, f64)>,
    counts: Vec<usize>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn new(bounds: &[(f64, f64)], counts: &[usize]) -> Result<Self> {
        let d = bounds.len();
        if d == 0 || d > MAX_QUADRATURE_DIM {
            return Err(Error::invalid("grid", "dimension must be 1 or 2"));
        }
        Error::check_dim("grid point counts", d, counts.len())?;
        for (&(lo, hi), &n) in bounds.iter().zip(counts) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid("grid", "bounds must be finite with lo < hi"));
            }
            if n < MIN_POINTS {
                return Err(Error::invalid("grid", format!("need >= {MIN_POINTS} points per axis")));
            }
        }
        let axis = |a: usize| -> (Vec<f64>, Vec<f64>) {
            let (lo, hi) = bounds[a];
            let n = counts[a];
            let h = (hi - lo) / (n - 1) as f64;
            let x = (0..n).map(|k| lo + h * k as f64).collect();
            let w = (0..n)
                .map(|k| if k == 0 || k == n - 1 { 0.5 * h } else { h })
                .collect();
            (x, w)
        };
        let (x0, w0) = axis(0);
        let (nodes, weights) = if d == 1 {
            (x0, w0)
        } else {
            let (x1, w1) = axis(1);
            let mut nodes = Vec::with_capacity(2 * x0.len() * x1.len());
            let mut weights = Vec::with_capacity(x0.len() * x1.len());
            for (a, wa) in x0.iter().zip(&w0) {
                for (b, wb) in x1.iter().zip(&w1) {
                    nodes.push(*a);
                    nodes.push(*b);
                    weights.push(wa * wb);
                }
            }
            (nodes, weights)
        };
        Ok(QuadratureGrid {
            bounds: bounds.to_vec(),
            counts: counts.to_vec(),
            nodes,
            weights,
        })
    }

    pub fn uniform_1d(lo: f64, hi: f64, count: usize) -> Result<Self> {
        Self::new(&[(lo, hi)], &[count])
    }

    /// Grid of `count` points per axis spanning `center ± half_widths`.
    pub fn centered(center: &[f64], half_widths: &[f64], count: usize) -> Result<Self> {
        Error::check_dim("grid half widths", center.len(), half_widths.len())?;
        let bounds: Vec<(f64, f64)> = center
            .iter()
            .zip(half_widths)
            .map(|(c, h)| (c - h, c + h))
            .collect();
        Self::new(&bounds, &vec![count; center.len()])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn node(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.nodes[j * d..(j + 1) * d]
    }

    pub fn nodes(&self) -> core::slice::ChunksExact<'_, f64> {
        self.nodes.chunks_exact(self.dim())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| hi - lo).product()
    }

    /// Error unless `u` sits at least `margins[a]` inside every axis.
    pub fn check_interior(&self, u: &[f64], margins: &[f64]) -> Result<()> {
        Error::check_dim("query point", self.dim(), u.len())?;
        for (a, (&(lo, hi), &x)) in self.bounds.iter().zip(u).enumerate() {
            let m = margins[a];
            if !(x - m >= lo && x + m <= hi) {
                return Err(Error::OutOfSupport(format!(
                    "axis {a}: {x} must lie in [{}, {}]",
                    lo + m,
                    hi - m
                )));
            }
        }
        Ok(())
    }
}

/// How the smoothing integral is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum Evaluation {
    /// Fixed grid; queries must keep a 6σ clearance from its edges.
    Quadrature(QuadratureGrid),
    /// Grid rebuilt around every query: `points` per axis over
    /// `± half_width_sigmas` kernel standard deviations.
    LocalQuadrature { points: usize, half_width_sigmas: f64 },
    /// `samples` kernel draws from `seed`.
    MonteCarlo { samples: usize, seed: RunSeed },
}

impl Evaluation {
    pub fn local() -> Self {
        Evaluation::LocalQuadrature {
            points: 129,
            half_width_sigmas: 8.0,
        }
    }
}

/// `Ẽ` for a base energy, a kernel φ = N(0, Σ) and an evaluation mode.
#[derive(Debug, Clone)]
pub struct SmoothedEnergy<E> {
    energy: E,
    kernel: NoiseKernel,
    mode: Evaluation,
}

/// Log-space integrand terms at a query point.
struct Terms {
    nodes: Vec<f64>,
    /// `E(y)/τ + log φ(U − y) + log w`
    tilted: Vec<f64>,
    /// `log φ(U − y) + log w`
    base: Vec<f64>,
    /// whether `base` depends on the query point
    fixed_grid: bool,
}

impl<E: EnergyModel> SmoothedEnergy<E> {
    pub fn new(energy: E, kernel: NoiseKernel, mode: Evaluation) -> Result<Self> {
        let d = energy.dim();
        let m = kernel.dim();
        if d == 0 || !d.is_multiple_of(m) {
            return Err(Error::DimensionMismatch {
                what: "energy dimension (multiple of kernel dimension)",
                expected: m,
                found: d,
            });
        }
        match &mode {
            Evaluation::Quadrature(grid) => Error::check_dim("quadrature grid", d, grid.dim())?,
            Evaluation::LocalQuadrature {
                points,
                half_width_sigmas,
            } => {
                if d > MAX_QUADRATURE_DIM {
                    return Err(Error::invalid("mode", "quadrature needs dimension <= 2"));
                }
                if *points < MIN_POINTS || *half_width_sigmas < SUPPORT_MARGIN_SIGMAS {
                    return Err(Error::invalid(
                        "mode",
                        "local grid needs >= 16 points and >= 6 sigma half width",
                    ));
                }
            }
            Evaluation::MonteCarlo { samples, .. } => {
                if *samples == 0 {
                    return Err(Error::invalid("samples", "must be >= 1"));
                }
            }
        }
        Ok(SmoothedEnergy { energy, kernel, mode })
    }

    pub fn energy(&self) -> &E {
        &self.energy
    }

    pub fn kernel(&self) -> &NoiseKernel {
        &self.kernel
    }

    pub fn mode(&self) -> &Evaluation {
        &self.mode
    }

    pub fn is_quadrature(&self) -> bool {
        !matches!(self.mode, Evaluation::MonteCarlo { .. })
    }

    fn axis_std(&self, axis: usize) -> f64 {
        self.kernel.covariance().variance(axis % self.kernel.dim()).sqrt()
    }

    fn terms(&self, u: &[f64]) -> Result<Terms> {
        let d = self.energy.dim();
        Error::check_dim("query point", d, u.len())?;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query point"));
        }
        let tau = self.kernel.temperature();
        let stds: Vec<f64> = (0..d).map(|a| self.axis_std(a)).collect();
        let local;
        let (grid, fixed_grid) = match &self.mode {
            Evaluation::Quadrature(grid) => {
                let margins: Vec<f64> = stds.iter().map(|s| SUPPORT_MARGIN_SIGMAS * s).collect();
                grid.check_interior(u, &margins)?;
                (grid, true)
            }
            Evaluation::LocalQuadrature {
                points,
                half_width_sigmas,
            } => {
                let half: Vec<f64> = stds.iter().map(|s| half_width_sigmas * s).collect();
                local = QuadratureGrid::centered(u, &half, *points)?;
                (&local, false)
            }
            Evaluation::MonteCarlo { samples, seed } => {
                let horizon = d / self.kernel.dim();
                let eps = sample_perturbations(&self.kernel, horizon, *samples, seed)?;
                let mut nodes = Vec::with_capacity(samples * d);
                let mut tilted = Vec::with_capacity(*samples);
                for e in &eps {
                    let start = nodes.len();
                    nodes.extend(u.iter().zip(e.as_slice()).map(|(a, b)| a + b));
                    tilted.push(self.energy.energy(&nodes[start..]) / tau);
                }
                let base = vec![0.0; *samples];
                return Ok(Terms {
                    nodes,
                    tilted,
                    base,
                    fixed_grid: false,
                });
            }
        };
        let mut delta = vec![0.0; d];
        let mut tilted = Vec::with_capacity(grid.len());
        let mut base = Vec::with_capacity(grid.len());
        for (y, w) in grid.nodes().zip(grid.weights()) {
            for ((dl, a), b) in delta.iter_mut().zip(u).zip(y) {
                *dl = a - b;
            }
            let b = self.kernel.log_density_sequence(&delta)? + w.ln();
            base.push(b);
            tilted.push(self.energy.energy(y) / tau + b);
        }
        Ok(Terms {
            nodes: grid.nodes.clone(),
            tilted,
            base,
            fixed_grid,
        })
    }

    /// `Ẽ(U)`. The kernel mass on the nodes is normalized out, so constant
    /// energies are reproduced exactly.
    pub fn value(&self, u: &[f64]) -> Result<f64> {
        let t = self.terms(u)?;
        let tau = self.kernel.temperature();
        Ok(tau * (log_sum_exp(&t.tilted)? - log_sum_exp(&t.base)?))
    }

    /// `∇Ẽ(U) = τ Σ⁻¹ (E_w[y] − U)` with `w ∝ exp(E(y)/τ) φ(U − y)`,
    /// obtained by differentiating under the integral.
    pub fn gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        let t = self.terms(u)?;
        let d = u.len();
        let mean = |logw: &[f64]| -> Result<Vec<f64>> {
            let w = normalized_exp(logw)?;
            let mut m = vec![0.0; d];
            for (y, wi) in t.nodes.chunks_exact(d).zip(&w) {
                for (mi, yi) in m.iter_mut().zip(y) {
                    *mi += wi * yi;
                }
            }
            Ok(m)
        };
        let tilted_mean = mean(&t.tilted)?;
        let reference = if t.fixed_grid { mean(&t.base)? } else { u.to_vec() };
        let shift: Vec<f64> = tilted_mean
            .iter()
            .zip(&reference)
            .map(|(a, b)| a - b)
            .collect();
        let tau = self.kernel.temperature();
        Ok(self
            .kernel
            .solve_sequence(&shift)?
            .into_iter()
            .map(|g| tau * g)
            .collect())
    }

    /// `∫ E(y) φ(U − y) dy` on the same nodes, normalized like [`Self::value`].
    pub fn local_average(&self, u: &[f64]) -> Result<f64> {
        let t = self.terms(u)?;
        let d = u.len();
        let w = normalized_exp(&t.base)?;
        Ok(t.nodes
            .chunks_exact(d)
            .zip(&w)
            .map(|(y, wi)| if *wi > 0.0 { wi * self.energy.energy(y) } else { 0.0 })
            .sum())
    }
}

pub fn smoothed_energy<E: EnergyModel>(se: &SmoothedEnergy<E>, u: &[f64]) -> Result<f64> {
    se.value(u)
}

pub fn smoothed_gradient<E: EnergyModel>(se: &SmoothedEnergy<E>, u: &[f64]) -> Result<Vec<f64>> {
    se.gradient(u)
}

/// `U' = U + (1/τ) Σ ∇Ẽ(U)`.
pub fn gradient_ascent_step<E: EnergyModel>(
    se: &SmoothedEnergy<E>,
    u: &ControlSequence,
) -> Result<ControlSequence> {
    let grad = se.gradient(u.as_slice())?;
    let tau = se.kernel().temperature();
    let step = se.kernel().apply_sequence(&grad)?;
    u.add_scaled(1.0 / tau, &step)
}

/// Smoothed value next to its Jensen lower bound `∫ E(y) φ(U − y) dy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JensenReport {
    pub smoothed: f64,
    pub lower_bound: f64,
}

impl JensenReport {
    pub fn gap(&self) -> f64 {
        self.smoothed - self.lower_bound
    }

    pub fn holds(&self, tolerance: f64) -> bool {
        self.gap() >= -tolerance
    }
}

pub fn jensen_bound_check<E: EnergyModel>(se: &SmoothedEnergy<E>, u: &[f64]) -> Result<JensenReport> {
    if !se.is_quadrature() {
        return Err(Error::invalid("mode", "Jensen check needs a quadrature mode"));
    }
    Ok(JensenReport {
        smoothed: se.value(u)?,
        lower_bound: se.local_average(u)?,
    })
}

/// Gibbs density `exp(E/τ)/Z` at the grid nodes and `log Z` by trapezoid.
pub fn gibbs_density<E: EnergyModel>(
    grid: &QuadratureGrid,
    energy: &E,
    temperature: f64,
) -> Result<(Vec<f64>, f64)> {
    crate::numeric::check_temperature(temperature)?;
    Error::check_dim("grid", energy.dim(), grid.dim())?;
    let logs: Vec<f64> = grid
        .nodes()
        .zip(grid.weights())
        .map(|(y, w)| energy.energy(y) / temperature + w.ln())
        .collect();
    let log_z = log_sum_exp(&logs)?;
    if log_z == f64::NEG_INFINITY {
        return Err(Error::DegenerateBatch);
    }
    let density = grid
        .nodes()
        .map(|y| (energy.energy(y) / temperature - log_z).exp())
        .collect();
    Ok((density, log_z))
}

/// `G_q = E_q[E] + τ S_q` for a density `q` tabulated on the grid.
pub fn gibbs_free_energy<E: EnergyModel>(
    grid: &QuadratureGrid,
    q: &[f64],
    energy: &E,
    temperature: f64,
) -> Result<f64> {
    crate::numeric::check_temperature(temperature)?;
    Error::check_dim("grid density", grid.len(), q.len())?;
    if q.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid("q", "density must be finite and nonnegative"));
    }
    let mass: f64 = q.iter().zip(grid.weights()).map(|(a, w)| a * w).sum();
    if (mass - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized { mass });
    }
    let mut g = 0.0;
    for ((y, &qj), w) in grid.nodes().zip(q).zip(grid.weights()) {
        if qj > 0.0 {
            g += w * qj * (energy.energy(y) - temperature * qj.ln());
        }
    }
    Ok(g)
}

/// `(p* ∗ φ)(U)` by quadrature over the grid.
pub fn smoothed_gibbs_density<E: EnergyModel>(
    grid: &QuadratureGrid,
    energy: &E,
    kernel: &NoiseKernel,
    u: &[f64],
) -> Result<f64> {
    let (p, _) = gibbs_density(grid, energy, kernel.temperature())?;
    let mut delta = vec![0.0; u.len()];
    let mut total = 0.0;
    for ((y, pj), w) in grid.nodes().zip(&p).zip(grid.weights()) {
        for ((dl, a), b) in delta.iter_mut().zip(u).zip(y) {
            *dl = a - b;
        }
        total += w * pj * kernel.log_density_sequence(&delta)?.exp();
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceRow {
    pub samples: usize,
    /// `‖MPPI step − gradient step‖` for the first replicate.
    pub error: f64,
    /// Root mean square of the error over all replicates.
    pub rms_error: f64,
    /// Norm of the per-coordinate standard errors of the first replicate.
    pub standard_error: f64,
    /// Every coordinate of the first replicate within 3 standard errors.
    pub within_3se: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    /// Gradient-ascent step `U' − U` from quadrature.
    pub gradient_step: Vec<f64>,
    pub rows: Vec<EquivalenceRow>,
    /// Least-squares slope of `ln rms_error` against `ln N`.
    pub slope: f64,
    pub pass: bool,
}

/// Compare one MPPI step against the gradient-ascent step on `Ẽ` for each
/// sample count, with `replicates` independent batches per count.
pub fn check_mppi_equivalence<E: EnergyModel + Sync>(
    energy: &E,
    kernel: &NoiseKernel,
    u: &ControlSequence,
    sample_counts: &[usize],
    replicates: usize,
    seed: &RunSeed,
) -> Result<EquivalenceReport> {
    if sample_counts.is_empty() || replicates == 0 {
        return Err(Error::Empty("sample counts / replicates"));
    }
    Error::check_dim("energy dimension", u.as_slice().len(), energy.dim())?;
    let se = SmoothedEnergy::new(energy, kernel.clone(), Evaluation::local())?;
    let target = gradient_ascent_step(&se, u)?;
    let gradient_step: Vec<f64> = target
        .as_slice()
        .iter()
        .zip(u.as_slice())
        .map(|(a, b)| a - b)
        .collect();
    let horizon = u.horizon();
    let mut rows = Vec::with_capacity(sample_counts.len());
    for &n in sample_counts {
        let mut sq = 0.0;
        let mut first = None;
        for r in 0..replicates {
            let s = seed.substream(n as u64).substream(r as u64);
            let eps = sample_perturbations(kernel, horizon, n, &s)?;
            let energies = crate::Serial.energies(energy, u, &eps);
            let (_, batch) = mppi_step(u, eps, energies, kernel.temperature())?;
            let diff: Vec<f64> = batch
                .direction()
                .iter()
                .zip(&gradient_step)
                .map(|(a, b)| a - b)
                .collect();
            let err = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
            sq += err * err;
            if r == 0 {
                let se_c = batch.direction_standard_error();
                let within = diff.iter().zip(&se_c).all(|(d, s)| d.abs() < 3.0 * s);
                let se_norm = se_c.iter().map(|x| x * x).sum::<f64>().sqrt();
                first = Some((err, se_norm, within));
            }
        }
        let (error, standard_error, within_3se) = first.expect("replicates >= 1");
        rows.push(EquivalenceRow {
            samples: n,
            error,
            rms_error: (sq / replicates as f64).sqrt(),
            standard_error,
            within_3se,
        });
    }
    let slope = log_log_slope(
        &rows.iter().map(|r| r.samples as f64).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.rms_error).collect::<Vec<_>>(),
    );
    let pass = rows.last().is_some_and(|r| r.within_3se);
    Ok(EquivalenceReport {
        gradient_step,
        rows,
        slope,
        pass,
    })
}

use crate::BatchRunner as _;

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
