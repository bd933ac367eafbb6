//! Numerical checks of the core identities.
//!
//! Each `measure_*` function returns raw measurements; [`run_check`] turns
//! them into pass/fail rows against the default tolerances below.

use std::fmt;

use gibbs_control_core::diffusion::{
    analytic_score, dsm_loss, log_marginal, reverse_path, smoothed_score_identity_check, FnScore, KdeDataModel,
    KdeScore, NoiseSchedule, Sampler, ScheduleKind,
};
use gibbs_control_core::envs::{energy_of, Pendulum};
use gibbs_control_core::landscapes::{DoubleWell, FourierFeatures, Quadratic};
use gibbs_control_core::policygrad::{check_pg_mppi_identity, pg_estimate_from, GaussianOpenLoopPolicy, IdentityReport};
use gibbs_control_core::smoothed::{
    check_mppi_equivalence, gibbs_density, gibbs_free_energy, gradient_ascent_step, jensen_bound_check,
    EquivalenceRow, Evaluation, QuadratureGrid, SmoothedEnergy,
};
use gibbs_control_core::{
    sample_perturbations, BatchRunner, ControlSequence, Covariance, EnergyModel, FnEnergy, NoiseKernel, PerturbationBatch,
    RunSeed, Serial,
};
use gibbs_control_core::planner::{guided_reverse_step, GuidanceConfig, TrajectoryLayout, TrajectoryPlan};
use rand::Rng;
use serde::Serialize;

use crate::config::Check;
use crate::parallel::Parallel;

pub type Result<T> = std::result::Result<T, gibbs_control_core::Error>;

pub const CLOSED_FORM_TOL: f64 = 1e-8;
pub const MPPI_SAMPLE_COUNTS: [usize; 4] = [100, 1_000, 10_000, 100_000];
pub const MPPI_REPLICATES: usize = 64;
pub const MPPI_SE_MULTIPLE: f64 = 3.0;
pub const MPPI_SLOPE: f64 = -0.5;
pub const MPPI_SLOPE_TOL: f64 = 0.1;
pub const JENSEN_TOL: f64 = 1e-6;
pub const SMOOTHING_LIMIT_SIGMA: f64 = 1e-3;
pub const SMOOTHING_LIMIT_TOL: f64 = 1e-3;
pub const FREE_ENERGY_TOL: f64 = 1e-6;
pub const PG_IDENTITY_TOL: f64 = 1e-10;
pub const PG_LINEAR_SAMPLES: usize = 100_000;
pub const PG_LINEAR_SE_MULTIPLE: f64 = 3.0;
pub const SAMPLER_STEPS: usize = 1000;
pub const SAMPLER_PATHS: usize = 20_000;
pub const SAMPLER_MEAN_SE_MULTIPLE: f64 = 3.0;
pub const SAMPLER_SECOND_MOMENT_REL: f64 = 0.05;
pub const SAMPLER_AGREEMENT_SE_MULTIPLE: f64 = 2.0;
pub const SCORE_IDENTITY_TOL: f64 = 1e-6;
pub const SCORE_FD_TOL: f64 = 1e-4;
pub const DSM_SAMPLES: usize = 100_000;
pub const DSM_ZERO_SCORE_REL: f64 = 0.02;
/// Guided minus unguided step equals the mean shift up to rounding.
pub const SHIFT_IDENTITY_TOL: f64 = 1e-12;

/// Two-point data set shared by the diffusion checks.
pub const MIXTURE_POINTS: [f64; 2] = [-1.0, 1.0];
pub const MIXTURE_BANDWIDTH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Bound {
    /// measured ≤ tolerance
    AtMost,
    /// measured ≥ tolerance
    AtLeast,
    /// measured < tolerance
    Below,
    /// measured > tolerance
    Above,
}

impl Bound {
    fn holds(self, measured: f64, tolerance: f64) -> bool {
        match self {
            Bound::AtMost => measured <= tolerance,
            Bound::AtLeast => measured >= tolerance,
            Bound::Below => measured < tolerance,
            Bound::Above => measured > tolerance,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Bound::AtMost => "<=",
            Bound::AtLeast => ">=",
            Bound::Below => "<",
            Bound::Above => ">",
        }
    }
}

/// One verification row: `claim` at `parameter` measured against a bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub check: String,
    pub claim: String,
    pub parameter: String,
    pub measured: f64,
    pub bound: Bound,
    pub tolerance: f64,
    pub pass: bool,
}

impl Row {
    pub fn new(
        check: Check,
        claim: impl Into<String>,
        parameter: impl fmt::Display,
        measured: f64,
        bound: Bound,
        tolerance: f64,
    ) -> Self {
        Self::named(check.name(), claim, parameter, measured, bound, tolerance)
    }

    pub fn named(
        check: &str,
        claim: impl Into<String>,
        parameter: impl fmt::Display,
        measured: f64,
        bound: Bound,
        tolerance: f64,
    ) -> Self {
        Row {
            check: check.to_string(),
            claim: claim.into(),
            parameter: parameter.to_string(),
            measured,
            bound,
            tolerance,
            // NaN never passes
            pass: bound.holds(measured, tolerance),
        }
    }
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::SmoothedClosedForm => "smoothed-closed-form",
            Check::MppiEquivalence => "mppi-equivalence",
            Check::JensenBound => "jensen-bound",
            Check::FreeEnergy => "free-energy",
            Check::PgIdentity => "pg-identity",
            Check::PgLinear => "pg-linear",
            Check::SamplerMoments => "sampler-moments",
            Check::ScoreIdentity => "score-identity",
            Check::DsmLoss => "dsm-loss",
        }
    }
}

/// Gaussian case `E(u) = −u²/2` against its closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormReport {
    pub max_value_error: f64,
    pub max_gradient_error: f64,
    pub max_step_error: f64,
    /// `max(−(Ẽ − (−(u² + σ²)/2)))`, negative when the bound holds strictly.
    pub max_jensen_violation: f64,
}

pub fn measure_smoothed_closed_form() -> Result<ClosedFormReport> {
    let mut r = ClosedFormReport {
        max_value_error: 0.0,
        max_gradient_error: 0.0,
        max_step_error: 0.0,
        max_jensen_violation: f64::NEG_INFINITY,
    };
    for var in [0.25, 1.0, 4.0] {
        let se = SmoothedEnergy::new(
            Quadratic::standard(1),
            NoiseKernel::isotropic(1, var, 1.0)?,
            Evaluation::local(),
        )?;
        for u in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            let value = se.value(&[u])?;
            let exact = -u * u / (2.0 * (1.0 + var)) - 0.5 * (1.0 + var).ln();
            let grad = se.gradient(&[u])?[0];
            let step = gradient_ascent_step(&se, &ControlSequence::from_scalars(&[u])?)?.as_slice()[0];
            r.max_value_error = r.max_value_error.max((value - exact).abs());
            r.max_gradient_error = r.max_gradient_error.max((grad + u / (1.0 + var)).abs());
            r.max_step_error = r.max_step_error.max((step - u / (1.0 + var)).abs());
            r.max_jensen_violation = r.max_jensen_violation.max(-(value + (u * u + var) / 2.0));
        }
    }
    Ok(r)
}

/// One MPPI step from `u = 1` on `E = −u²/2` with `τ = σ² = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MppiConvergence {
    /// `u/(1+σ²) − u`
    pub closed_form_step: f64,
    /// Gradient step on `Ẽ` by quadrature.
    pub quadrature_step: f64,
    pub rows: Vec<EquivalenceRow>,
    /// Upper bound on `|MPPI step − closed form|` at the largest N.
    pub final_error: f64,
    pub final_standard_error: f64,
    pub slope: f64,
}

pub fn measure_mppi_equivalence(seed: &RunSeed, replicates: usize) -> Result<MppiConvergence> {
    let kernel = NoiseKernel::isotropic(1, 1.0, 1.0)?;
    let u = ControlSequence::from_scalars(&[1.0])?;
    let report = check_mppi_equivalence(&Quadratic::standard(1), &kernel, &u, &MPPI_SAMPLE_COUNTS, replicates, seed)?;
    let closed_form_step = 1.0 / 2.0 - 1.0;
    let quadrature_step = report.gradient_step[0];
    let last = report.rows.last().expect("non-empty sample counts");
    Ok(MppiConvergence {
        closed_form_step,
        quadrature_step,
        // the row error is measured against the quadrature step
        final_error: last.error + (quadrature_step - closed_form_step).abs(),
        final_standard_error: last.standard_error,
        slope: report.slope,
        rows: report.rows,
    })
}

/// Jensen gaps and the small-σ limit over random Fourier energies.
#[derive(Debug, Clone, PartialEq)]
pub struct JensenSweep {
    pub energies: usize,
    pub points: usize,
    /// Smallest `Ẽ − ∫ E φ` over every energy, point and kernel width.
    pub min_gap: f64,
    /// `max |Ẽ − E|` at `σ = 1e-3`.
    pub max_limit_error: f64,
}

pub const JENSEN_SIGMAS: [f64; 3] = [0.1, 0.5, 1.0];

pub fn measure_jensen(par: &Parallel, seed: &RunSeed, energies: usize, points: usize) -> Result<JensenSweep> {
    let per_energy = par.map(energies, |k| -> Result<(f64, f64)> {
        let energy = FourierFeatures::random(1, 16, 1.0, &seed.substream(0), k as u64)?;
        let mut rng = seed.substream(1).rng(k as u64);
        let queries: Vec<f64> = (0..points).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut min_gap = f64::INFINITY;
        for sigma in JENSEN_SIGMAS {
            let se = SmoothedEnergy::new(&energy, NoiseKernel::isotropic(1, sigma * sigma, 1.0)?, Evaluation::local())?;
            for &u in &queries {
                min_gap = min_gap.min(jensen_bound_check(&se, &[u])?.gap());
            }
        }
        let var = SMOOTHING_LIMIT_SIGMA * SMOOTHING_LIMIT_SIGMA;
        let se = SmoothedEnergy::new(&energy, NoiseKernel::isotropic(1, var, 1.0)?, Evaluation::local())?;
        let mut limit = 0.0f64;
        for &u in &queries {
            limit = limit.max((se.value(&[u])? - energy.energy(&[u])).abs());
        }
        Ok((min_gap, limit))
    });
    let mut sweep = JensenSweep {
        energies,
        points,
        min_gap: f64::INFINITY,
        max_limit_error: 0.0,
    };
    for r in per_energy {
        let (gap, limit) = r?;
        sweep.min_gap = sweep.min_gap.min(gap);
        sweep.max_limit_error = sweep.max_limit_error.max(limit);
    }
    Ok(sweep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeEnergyReport {
    /// `|G_{p*} − τ log Z|`
    pub optimum_gap: f64,
    /// `max_q (G_q − G_{p*})`; negative when every `q` is strictly worse.
    pub max_competitor_margin: f64,
    pub competitors: usize,
}

/// Free energy on a 1D grid for the tilted double well at `τ = 0.5`.
pub fn measure_free_energy(seed: &RunSeed, competitors: usize) -> Result<FreeEnergyReport> {
    let tau = 0.5;
    let energy = DoubleWell::default();
    let grid = QuadratureGrid::uniform_1d(-3.0, 3.0, 1201)?;
    let (p, log_z) = gibbs_density(&grid, &energy, tau)?;
    let g_star = gibbs_free_energy(&grid, &p, &energy, tau)?;
    let normalize = |q: Vec<f64>| -> Vec<f64> {
        let mass: f64 = q.iter().zip(grid.weights()).map(|(a, w)| a * w).sum();
        q.into_iter().map(|v| v / mass).collect()
    };
    let mut margin = f64::NEG_INFINITY;
    for k in 0..competitors {
        let f = FourierFeatures::random(1, 8, 1.5, seed, k as u64)?;
        let q: Vec<f64> = if k % 2 == 0 {
            // broad random densities
            grid.nodes().map(|y| (2.0 * f.energy(y) - 0.1 * y[0] * y[0]).exp()).collect()
        } else {
            // small tilts of the optimum
            let eps = 0.1 * (k as f64 + 1.0) / competitors as f64;
            grid.nodes().zip(&p).map(|(y, pj)| pj * (eps * f.energy(y)).exp()).collect()
        };
        let g = gibbs_free_energy(&grid, &normalize(q), &energy, tau)?;
        margin = margin.max(g - g_star);
    }
    Ok(FreeEnergyReport {
        optimum_gap: (g_star - tau * log_z).abs(),
        max_competitor_margin: margin,
        competitors,
    })
}

/// PG-to-MPPI identity on a shared 64-sample pendulum batch.
pub fn measure_pg_identity(seed: &RunSeed) -> Result<IdentityReport> {
    let (horizon, samples, tau, var) = (20, 64, 10.0, 4.0);
    let env = Pendulum::default();
    let energy = energy_of(&env, &env, &[0.0, 0.0], horizon)?;
    let policy = GaussianOpenLoopPolicy::new(ControlSequence::zeros(horizon, 1)?, Covariance::isotropic(1, var)?)?;
    let kernel = policy.kernel(tau)?;
    let eps = sample_perturbations(&kernel, horizon, samples, seed)?;
    let energies = Serial.energies(&energy, policy.means(), &eps);
    let batch = PerturbationBatch::from_energies(eps, energies, tau)?;
    check_pg_mppi_identity(&policy, &batch)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPgReport {
    pub gradient: Vec<f64>,
    pub estimate: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// `max_k |ĝ_k − g_k| / SE_k`
    pub max_z: f64,
}

/// Vanilla estimator on `R(U) = gᵀU` with a 5-step scalar policy.
pub fn measure_pg_linear(seed: &RunSeed, samples: usize) -> Result<LinearPgReport> {
    let g = vec![1.0, -2.0, 0.5, 3.0, -1.5];
    let var = 0.5;
    let policy = GaussianOpenLoopPolicy::new(
        ControlSequence::from_scalars(&[0.2, -0.1, 0.0, 0.4, 0.3])?,
        Covariance::isotropic(1, var)?,
    )?;
    let reward = FnEnergy::new(g.len(), |u: &[f64]| u.iter().zip(&[1.0, -2.0, 0.5, 3.0, -1.5]).map(|(a, b)| a * b).sum());
    let kernel = policy.kernel(1.0)?;
    let eps = sample_perturbations(&kernel, g.len(), samples, seed)?;
    let returns = Serial.energies(&reward, policy.means(), &eps);
    let estimate = pg_estimate_from(&policy, &eps, &returns)?.into_vec();
    // per-sample terms R_i Σ⁻¹ ε_i for the standard error
    let n = samples as f64;
    let standard_errors: Vec<f64> = (0..g.len())
        .map(|k| {
            let terms = eps.iter().zip(&returns).map(|(e, r)| r * e.as_slice()[k] / var);
            let (s, s2) = terms.fold((0.0, 0.0), |(s, s2), t| (s + t, s2 + t * t));
            let mean = s / n;
            ((s2 / n - mean * mean) * n / (n - 1.0) / n).sqrt()
        })
        .collect();
    let max_z = estimate
        .iter()
        .zip(&g)
        .zip(&standard_errors)
        .map(|((e, g), s)| (e - g).abs() / s)
        .fold(0.0, f64::max);
    Ok(LinearPgReport {
        gradient: g,
        estimate,
        standard_errors,
        max_z,
    })
}

/// Sample moments of one reverse sampler on the two-point mixture.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantMoments {
    pub kind: ScheduleKind,
    pub sampler: Sampler,
    pub mean: f64,
    pub mean_se: f64,
    pub second_moment: f64,
    pub second_moment_se: f64,
    pub target_second_moment: f64,
}

impl VariantMoments {
    pub fn label(&self) -> String {
        let k = match self.kind {
            ScheduleKind::Ve => "ve",
            ScheduleKind::Vp => "vp",
        };
        let s = match self.sampler {
            Sampler::Ancestral => "ancestral",
            Sampler::ReverseDiffusion => "reverse-diffusion",
        };
        format!("{k}/{s}")
    }
}

pub fn mixture_data() -> Result<KdeDataModel> {
    KdeDataModel::from_scalars(&MIXTURE_POINTS, MIXTURE_BANDWIDTH)
}

/// VE geometric σ ∈ [0.01, 10] and VP linear β ∈ [1e-4, 0.02].
pub fn verification_schedules(steps: usize) -> Result<[NoiseSchedule; 2]> {
    Ok([
        NoiseSchedule::ve_geometric(0.01, 10.0, steps)?,
        NoiseSchedule::vp_linear(1e-4, 0.02, steps)?,
    ])
}

/// Mean and standard error of `values`.
pub fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (n, s, s2) = values.fold((0.0, 0.0, 0.0), |(n, s, s2), v| (n + 1.0, s + v, s2 + v * v));
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn sample_moments(
    par: &Parallel,
    data: &KdeDataModel,
    schedule: &NoiseSchedule,
    sampler: Sampler,
    paths: usize,
    seed: &RunSeed,
) -> (Vec<f64>, VariantMoments) {
    let score = KdeScore { data, schedule };
    let xs: Vec<f64> = par.map(paths, |p| reverse_path(schedule, &score, sampler, seed, p as u64)[0]);
    let (mean, mean_se) = mean_and_se(xs.iter().copied());
    let (second_moment, second_moment_se) = mean_and_se(xs.iter().map(|x| x * x));
    let moments = VariantMoments {
        kind: schedule.kind(),
        sampler,
        mean,
        mean_se,
        second_moment,
        second_moment_se,
        target_second_moment: data.second_moment(),
    };
    (xs, moments)
}

/// All four schedule/sampler combinations from the same seed.
pub fn measure_sampler_moments(par: &Parallel, seed: &RunSeed, steps: usize, paths: usize) -> Result<Vec<VariantMoments>> {
    let data = mixture_data()?;
    let mut out = Vec::with_capacity(4);
    for schedule in verification_schedules(steps)? {
        for sampler in [Sampler::Ancestral, Sampler::ReverseDiffusion] {
            out.push(sample_moments(par, &data, &schedule, sampler, paths, seed).1);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    /// Largest `|analytic − smoothed| / max(1, |analytic|)`.
    pub max_identity_error: f64,
    /// Largest `|analytic − finite difference| / max(1, |analytic|)`.
    pub max_fd_error: f64,
    pub identity_points: usize,
    pub fd_points: usize,
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(1.0)
}

pub fn measure_score_identity(seed: &RunSeed, identity_points: usize, fd_points: usize) -> Result<ScoreReport> {
    let data = mixture_data()?;
    let schedules = verification_schedules(SAMPLER_STEPS)?;
    let mut rng = seed.rng(0);
    let draw = |rng: &mut gibbs_control_core::StreamRng| {
        let schedule = &schedules[rng.random_range(0..2)];
        let i = rng.random_range(1..=schedule.steps());
        let x = rng.random_range(-2.0..2.0);
        (schedule, i, x)
    };
    let mut max_identity_error = 0.0f64;
    for _ in 0..identity_points {
        let (schedule, i, x) = draw(&mut rng);
        let r = smoothed_score_identity_check(&data, schedule, i, &[x])?;
        max_identity_error = max_identity_error.max(relative(r.analytic[0], r.smoothed[0]));
    }
    let mut max_fd_error = 0.0f64;
    for _ in 0..fd_points {
        let (schedule, i, x) = draw(&mut rng);
        let h = 1e-5;
        let fd = (log_marginal(&data, schedule, i, &[x + h])? - log_marginal(&data, schedule, i, &[x - h])?) / (2.0 * h);
        let a = analytic_score(&data, schedule, i, &[x])?[0];
        max_fd_error = max_fd_error.max(relative(a, fd));
    }
    Ok(ScoreReport {
        max_identity_error,
        max_fd_error,
        identity_points,
        fd_points,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsmCase {
    pub kind: ScheduleKind,
    pub step: usize,
    pub analytic_loss: f64,
    pub offset_loss: f64,
    pub zero_score_loss: f64,
    /// `d / v_i` for single-point data
    pub zero_score_expected: f64,
}

/// Analytic vs offset score on the mixture, and the zero score on a single
/// 2D point, at a mid-schedule step of each kind.
pub fn measure_dsm(seed: &RunSeed, samples: usize) -> Result<Vec<DsmCase>> {
    let data = mixture_data()?;
    let single = KdeDataModel::new(2, vec![0.3, -0.7], MIXTURE_BANDWIDTH)?;
    let mut out = Vec::new();
    for schedule in verification_schedules(SAMPLER_STEPS)? {
        let step = schedule.steps() / 2;
        let exact = FnScore::new(1, |x: &[f64], i| analytic_score(&data, &schedule, i, x).expect("step in range"));
        let offset = FnScore::new(1, |x: &[f64], i| {
            analytic_score(&data, &schedule, i, x).expect("step in range").into_iter().map(|v| v + 0.5).collect()
        });
        let zero = FnScore::new(2, |_: &[f64], _| vec![0.0, 0.0]);
        let (_, v) = schedule.kernel_coefficients(step);
        out.push(DsmCase {
            kind: schedule.kind(),
            step,
            analytic_loss: dsm_loss(&data, &schedule, step, &exact, samples, seed)?,
            offset_loss: dsm_loss(&data, &schedule, step, &offset, samples, seed)?,
            zero_score_loss: dsm_loss(&single, &schedule, step, &zero, samples, seed)?,
            zero_score_expected: 2.0 / v,
        });
    }
    Ok(out)
}

/// Largest `|(guided − unguided) − αΣ∇E(μ)| / max(1, |αΣ∇E(μ)|)` over the
/// free slots of every step of one reverse chain, with the guided and
/// unguided steps taken from the same state and the same noise.
pub fn measure_guided_shift_identity<E: EnergyModel + Clone>(
    layout: TrajectoryLayout,
    prior: &KdeDataModel,
    schedule: &NoiseSchedule,
    guidance: &GuidanceConfig<E>,
    s: &[f64],
    seed: &RunSeed,
) -> Result<f64> {
    let plain = GuidanceConfig {
        scale: 0.0,
        ..guidance.clone()
    };
    let mut rng = seed.rng(0);
    let normal = |rng: &mut gibbs_control_core::StreamRng| -> f64 { rng.sample(rand_distr::StandardNormal) };
    let prior_sd = schedule.prior_variance().sqrt();
    let values = (0..layout.len()).map(|_| prior_sd * normal(&mut rng)).collect();
    let mut plan = TrajectoryPlan::new(layout, values, schedule.steps())?;
    plan.clamp(s);
    let clamped = layout.state_slots(0);
    let mut worst = 0.0f64;
    while plan.step > 0 {
        let z: Vec<f64> = (0..layout.len()).map(|_| normal(&mut rng)).collect();
        let a = guided_reverse_step(&plan, prior, schedule, guidance, s, &z)?;
        let b = guided_reverse_step(&plan, prior, schedule, &plain, s, &z)?;
        for k in (0..layout.len()).filter(|k| !clamped.contains(k)) {
            let diff = a.plan.values[k] - b.plan.values[k];
            worst = worst.max(relative(a.shift[k], diff));
        }
        plan = a.plan;
    }
    Ok(worst)
}

/// Everything `verify` produces for one check.
#[derive(Debug, Clone, Default)]
pub struct CheckOutput {
    pub rows: Vec<Row>,
    /// `(N, rms error)` of the MPPI convergence sweep.
    pub convergence: Option<Vec<(f64, f64)>>,
}

pub fn run_check(check: Check, par: &Parallel, seed: &RunSeed) -> Result<CheckOutput> {
    let seed = seed.substream(check as u64);
    let mut out = CheckOutput::default();
    let rows = &mut out.rows;
    match check {
        Check::SmoothedClosedForm => {
            let r = measure_smoothed_closed_form()?;
            rows.push(Row::new(check, "smoothed value error", "sigma2=0.25,1,4", r.max_value_error, Bound::AtMost, CLOSED_FORM_TOL));
            rows.push(Row::new(check, "smoothed gradient error", "sigma2=0.25,1,4", r.max_gradient_error, Bound::AtMost, CLOSED_FORM_TOL));
            rows.push(Row::new(check, "gradient step error", "sigma2=0.25,1,4", r.max_step_error, Bound::AtMost, CLOSED_FORM_TOL));
            rows.push(Row::new(check, "jensen violation", "sigma2=0.25,1,4", r.max_jensen_violation, Bound::AtMost, 0.0));
        }
        Check::MppiEquivalence => {
            let r = measure_mppi_equivalence(&seed, MPPI_REPLICATES)?;
            rows.push(Row::new(
                check,
                "quadrature step vs closed form",
                "u=1",
                (r.quadrature_step - r.closed_form_step).abs(),
                Bound::AtMost,
                CLOSED_FORM_TOL,
            ));
            for row in &r.rows {
                rows.push(Row::new(check, "rms error", format!("N={}", row.samples), row.rms_error, Bound::AtMost, f64::INFINITY));
            }
            let last = r.rows.last().expect("sample counts");
            rows.push(Row::new(
                check,
                "error in standard errors",
                format!("N={}", last.samples),
                r.final_error / r.final_standard_error,
                Bound::Below,
                MPPI_SE_MULTIPLE,
            ));
            rows.push(Row::new(check, "log-log slope deviation", "slope+0.5", (r.slope - MPPI_SLOPE).abs(), Bound::AtMost, MPPI_SLOPE_TOL));
            out.convergence = Some(r.rows.iter().map(|row| (row.samples as f64, row.rms_error)).collect());
        }
        Check::JensenBound => {
            let r = measure_jensen(par, &seed, 100, 100)?;
            rows.push(Row::new(check, "min jensen gap", "sigma=0.1,0.5,1", r.min_gap, Bound::Above, -JENSEN_TOL));
            rows.push(Row::new(
                check,
                "max |smoothed - E|",
                format!("sigma={SMOOTHING_LIMIT_SIGMA}"),
                r.max_limit_error,
                Bound::Below,
                SMOOTHING_LIMIT_TOL,
            ));
        }
        Check::FreeEnergy => {
            let r = measure_free_energy(&seed, 100)?;
            rows.push(Row::new(check, "|G(p*) - tau log Z|", "tau=0.5", r.optimum_gap, Bound::Below, FREE_ENERGY_TOL));
            rows.push(Row::new(
                check,
                "max G(q) - G(p*)",
                format!("q={}", r.competitors),
                r.max_competitor_margin,
                Bound::Below,
                0.0,
            ));
        }
        Check::PgIdentity => {
            let r = measure_pg_identity(&seed)?;
            rows.push(Row::new(check, "exp-pg reconstruction residual", "N=64", r.residual, Bound::AtMost, PG_IDENTITY_TOL));
            rows.push(Row::new(
                check,
                "vanilla-pg control residual",
                "N=64",
                r.negative_control_residual,
                Bound::Above,
                PG_IDENTITY_TOL,
            ));
        }
        Check::PgLinear => {
            let r = measure_pg_linear(&seed, PG_LINEAR_SAMPLES)?;
            rows.push(Row::new(
                check,
                "max error in standard errors",
                format!("N={PG_LINEAR_SAMPLES}"),
                r.max_z,
                Bound::Below,
                PG_LINEAR_SE_MULTIPLE,
            ));
        }
        Check::SamplerMoments => {
            let moments = measure_sampler_moments(par, &seed, SAMPLER_STEPS, SAMPLER_PATHS)?;
            rows.extend(sampler_rows(&moments));
        }
        Check::ScoreIdentity => {
            let r = measure_score_identity(&seed, 10, 100)?;
            rows.push(Row::new(check, "analytic vs smoothed gradient", "points=10", r.max_identity_error, Bound::AtMost, SCORE_IDENTITY_TOL));
            rows.push(Row::new(check, "analytic vs finite difference", "points=100", r.max_fd_error, Bound::AtMost, SCORE_FD_TOL));
        }
        Check::DsmLoss => {
            for c in measure_dsm(&seed, DSM_SAMPLES)? {
                let tag = format!("{}/i={}", kind_name(c.kind), c.step);
                rows.push(Row::new(check, "analytic minus offset loss", &tag, c.analytic_loss - c.offset_loss, Bound::Below, 0.0));
                rows.push(Row::new(
                    check,
                    "zero-score loss relative to d/v",
                    &tag,
                    (c.zero_score_loss / c.zero_score_expected - 1.0).abs(),
                    Bound::Below,
                    DSM_ZERO_SCORE_REL,
                ));
            }
        }
    }
    Ok(out)
}

pub fn kind_name(kind: ScheduleKind) -> &'static str {
    match kind {
        ScheduleKind::Ve => "ve",
        ScheduleKind::Vp => "vp",
    }
}

/// Per-variant mean and second-moment rows plus pairwise agreement.
pub fn sampler_rows(moments: &[VariantMoments]) -> Vec<Row> {
    let check = Check::SamplerMoments;
    let mut rows = Vec::new();
    for m in moments {
        rows.push(Row::new(check, "|mean| in standard errors", m.label(), m.mean.abs() / m.mean_se, Bound::AtMost, SAMPLER_MEAN_SE_MULTIPLE));
        rows.push(Row::new(
            check,
            "second moment relative error",
            m.label(),
            (m.second_moment / m.target_second_moment - 1.0).abs(),
            Bound::AtMost,
            SAMPLER_SECOND_MOMENT_REL,
        ));
    }
    for (a, ma) in moments.iter().enumerate() {
        for mb in &moments[a + 1..] {
            let pair = format!("{}~{}", ma.label(), mb.label());
            let se = ma.mean_se.hypot(mb.mean_se);
            rows.push(Row::new(check, "mean difference in standard errors", &pair, (ma.mean - mb.mean).abs() / se, Bound::AtMost, SAMPLER_AGREEMENT_SE_MULTIPLE));
            let se2 = ma.second_moment_se.hypot(mb.second_moment_se);
            rows.push(Row::new(
                check,
                "second moment difference in standard errors",
                &pair,
                (ma.second_moment - mb.second_moment).abs() / se2,
                Bound::AtMost,
                SAMPLER_AGREEMENT_SE_MULTIPLE,
            ));
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_suite_passes() {
        let r = measure_smoothed_closed_form().unwrap();
        assert!(r.max_value_error < CLOSED_FORM_TOL, "{r:?}");
        assert!(r.max_step_error < CLOSED_FORM_TOL, "{r:?}");
        assert!(r.max_jensen_violation < 0.0, "{r:?}");
    }

    #[test]
    fn rows_reject_nan() {
        let r = Row::new(Check::DsmLoss, "x", 1, f64::NAN, Bound::AtMost, 1.0);
        assert!(!r.pass);
        assert!(Row::new(Check::DsmLoss, "x", 1, 0.5, Bound::Above, 0.0).pass);
        assert!(!Row::new(Check::DsmLoss, "x", 1, 0.0, Bound::Below, 0.0).pass);
    }

    #[test]
    fn moments_of_known_values() {
        let (m, se) = mean_and_se([1.0, 3.0].into_iter());
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }
}
