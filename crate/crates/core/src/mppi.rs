//! MPPI: softmax-weighted perturbation averaging.
//!
//! The vanilla update is `U' = U + Σ_i w_i E_i` with
//! `w = softmax(E(U + E_i) / τ)`. The regularized variant subtracts
//! `Σ_t (u_t − ũ_t)ᵀ Σ⁻¹ ε_{t,i}` from each exponent; with a zero nominal
//! sequence this is the zero-mean-prior form.
//!
//! Note the regularizer enters unscaled by `1/τ`, exactly as in the
//! information-theoretic MPPI update it comes from.

use alloc::vec;
use alloc::vec::Vec;

use crate::envs::{rollout_seeded, Cost, Dynamics, Trajectory};
use crate::{
    BatchRunner, ControlSequence, EnergyModel, Error, NoiseKernel, PerturbationBatch, Result,
    RunSeed, Serial,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Variant {
    #[default]
    Vanilla,
    Regularized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MppiConfig {
    pub kernel: NoiseKernel,
    pub samples: usize,
    pub horizon: usize,
    pub iterations: usize,
    pub variant: Variant,
    /// Nominal controls ũ for the regularized variant; zero when absent.
    pub nominal: Option<ControlSequence>,
}

impl MppiConfig {
    pub fn new(kernel: NoiseKernel, samples: usize, horizon: usize, iterations: usize) -> Result<Self> {
        let cfg = MppiConfig {
            kernel,
            samples,
            horizon,
            iterations,
            variant: Variant::Vanilla,
            nominal: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn regularized(mut self, nominal: Option<ControlSequence>) -> Result<Self> {
        self.variant = Variant::Regularized;
        self.nominal = nominal;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::invalid("samples", "must be >= 1"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations", "must be >= 1"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be >= 1"));
        }
        if let Some(nominal) = &self.nominal {
            Error::check_dim("nominal horizon", self.horizon, nominal.horizon())?;
            Error::check_dim("nominal control dimension", self.kernel.dim(), nominal.dim())?;
        }
        Ok(())
    }

    pub fn temperature(&self) -> f64 {
        self.kernel.temperature()
    }

    fn check_controls(&self, u: &ControlSequence) -> Result<()> {
        Error::check_dim("control horizon", self.horizon, u.horizon())?;
        Error::check_dim("control dimension", self.kernel.dim(), u.dim())
    }
}

/// One MPPI update on a given set of perturbations and their energies.
pub fn mppi_step(
    u: &ControlSequence,
    perturbations: Vec<ControlSequence>,
    energies: Vec<f64>,
    temperature: f64,
) -> Result<(ControlSequence, PerturbationBatch)> {
    if let Some(p) = perturbations.first() {
        u.check_shape(p)?;
    }
    let batch = PerturbationBatch::from_energies(perturbations, energies, temperature)?;
    let next = u.add_scaled(1.0, &batch.direction())?;
    Ok((next, batch))
}

/// `Σ_t (u_t − ũ_t)ᵀ Σ⁻¹ ε_t` for every perturbation.
pub fn regularization_terms(
    u: &ControlSequence,
    nominal: Option<&ControlSequence>,
    kernel: &NoiseKernel,
    perturbations: &[ControlSequence],
) -> Result<Vec<f64>> {
    let offset: Vec<f64> = match nominal {
        Some(n) => {
            u.check_shape(n)?;
            u.as_slice().iter().zip(n.as_slice()).map(|(a, b)| a - b).collect()
        }
        None => u.as_slice().to_vec(),
    };
    let scaled = kernel.solve_sequence(&offset)?;
    perturbations
        .iter()
        .map(|p| {
            u.check_shape(p)?;
            Ok(scaled.iter().zip(p.as_slice()).map(|(a, e)| a * e).sum())
        })
        .collect()
}

/// Regularized MPPI update on given perturbations and energies.
pub fn mppi_step_regularized(
    u: &ControlSequence,
    nominal: Option<&ControlSequence>,
    kernel: &NoiseKernel,
    perturbations: Vec<ControlSequence>,
    energies: Vec<f64>,
) -> Result<(ControlSequence, PerturbationBatch)> {
    let tau = kernel.temperature();
    let reg = regularization_terms(u, nominal, kernel, &perturbations)?;
    let exponents = energies.iter().zip(&reg).map(|(e, r)| e / tau - r).collect();
    let batch = PerturbationBatch::from_exponents(perturbations, energies, exponents, tau)?;
    let next = u.add_scaled(1.0, &batch.direction())?;
    Ok((next, batch))
}

fn check_energy<E: EnergyModel>(energy: &E, u: &ControlSequence) -> Result<()> {
    Error::check_dim("energy dimension", u.as_slice().len(), energy.dim())
}

/// Vanilla MPPI update with freshly sampled perturbations.
pub fn mppi_update<E: EnergyModel + Sync>(
    u: &ControlSequence,
    energy: &E,
    cfg: &MppiConfig,
    seed: &RunSeed,
) -> Result<(ControlSequence, PerturbationBatch)> {
    mppi_update_with(&Serial, u, energy, cfg, seed)
}

pub fn mppi_update_with<R: BatchRunner, E: EnergyModel + Sync>(
    runner: &R,
    u: &ControlSequence,
    energy: &E,
    cfg: &MppiConfig,
    seed: &RunSeed,
) -> Result<(ControlSequence, PerturbationBatch)> {
    cfg.check_controls(u)?;
    check_energy(energy, u)?;
    let perturbations = runner.perturbations(&cfg.kernel, cfg.horizon, cfg.samples, seed)?;
    let energies = runner.energies(energy, u, &perturbations);
    mppi_step(u, perturbations, energies, cfg.temperature())
}

/// Regularized MPPI update; `cfg.nominal` defaults to zero.
pub fn mppi_update_regularized<E: EnergyModel + Sync>(
    u: &ControlSequence,
    energy: &E,
    cfg: &MppiConfig,
    seed: &RunSeed,
) -> Result<(ControlSequence, PerturbationBatch)> {
    mppi_update_regularized_with(&Serial, u, energy, cfg, seed)
}

pub fn mppi_update_regularized_with<R: BatchRunner, E: EnergyModel + Sync>(
    runner: &R,
    u: &ControlSequence,
    energy: &E,
    cfg: &MppiConfig,
    seed: &RunSeed,
) -> Result<(ControlSequence, PerturbationBatch)> {
    cfg.check_controls(u)?;
    check_energy(energy, u)?;
    let perturbations = runner.perturbations(&cfg.kernel, cfg.horizon, cfg.samples, seed)?;
    let energies = runner.energies(energy, u, &perturbations);
    mppi_step_regularized(u, cfg.nominal.as_ref(), &cfg.kernel, perturbations, energies)
}

/// Diagnostics of a single MPPI iteration inside the control loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub step: usize,
    pub iteration: usize,
    pub effective_sample_size: f64,
    pub max_weight: f64,
    pub best_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlLoopLog {
    /// Planned trajectory after the updates at each environment step.
    pub plans: Vec<Trajectory>,
    /// Executed states, `steps + 1` entries starting at `x0`.
    pub executed_states: Vec<Vec<f64>>,
    pub executed_controls: Vec<Vec<f64>>,
    /// Running cost of each executed step.
    pub step_costs: Vec<f64>,
    pub iterations: Vec<IterationStats>,
}

impl ControlLoopLog {
    pub fn final_state(&self) -> &[f64] {
        self.executed_states.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Receding-horizon MPPI: per step run `cfg.iterations` updates, execute
/// `u_0`, shift left and zero-fill the tail.
pub fn mppi_control_loop<D, C>(
    dynamics: &D,
    cost: &C,
    x0: &[f64],
    cfg: &MppiConfig,
    steps: usize,
    seed: &RunSeed,
) -> Result<ControlLoopLog>
where
    D: Dynamics + Sync + ?Sized,
    C: Cost + Sync + ?Sized,
{
    mppi_control_loop_with(&Serial, dynamics, cost, x0, cfg, steps, seed)
}

pub fn mppi_control_loop_with<R, D, C>(
    runner: &R,
    dynamics: &D,
    cost: &C,
    x0: &[f64],
    cfg: &MppiConfig,
    steps: usize,
    seed: &RunSeed,
) -> Result<ControlLoopLog>
where
    R: BatchRunner,
    D: Dynamics + Sync + ?Sized,
    C: Cost + Sync + ?Sized,
{
    cfg.validate()?;
    if steps == 0 {
        return Err(Error::invalid("steps", "must be >= 1"));
    }
    Error::check_dim("initial state", dynamics.state_dim(), x0.len())?;
    Error::check_dim("control dimension", dynamics.control_dim(), cfg.kernel.dim())?;

    let execution_seed = seed.substream(u64::MAX);
    let mut u = ControlSequence::zeros(cfg.horizon, cfg.kernel.dim())?;
    let mut x = x0.to_vec();
    let mut log = ControlLoopLog {
        plans: Vec::with_capacity(steps),
        executed_states: vec![x.clone()],
        executed_controls: Vec::with_capacity(steps),
        step_costs: Vec::with_capacity(steps),
        iterations: Vec::with_capacity(steps * cfg.iterations),
    };
    for step in 0..steps {
        let energy = crate::envs::energy_of(dynamics, cost, &x, cfg.horizon)?;
        for iteration in 0..cfg.iterations {
            let iter_seed = seed.substream((step * cfg.iterations + iteration) as u64);
            let (next, batch) = match cfg.variant {
                Variant::Vanilla => mppi_update_with(runner, &u, &energy, cfg, &iter_seed)?,
                Variant::Regularized => {
                    mppi_update_regularized_with(runner, &u, &energy, cfg, &iter_seed)?
                }
            };
            log.iterations.push(IterationStats {
                step,
                iteration,
                effective_sample_size: batch.effective_sample_size(),
                max_weight: batch.max_weight(),
                best_energy: batch.best_energy(),
            });
            u = next;
        }
        log.plans.push(rollout_seeded(dynamics, cost, &x, &u, None)?);

        let u0 = u.step(0).to_vec();
        let first = ControlSequence::from_flat(u0.len(), u0.clone())?;
        let executed = rollout_seeded(dynamics, cost, &x, &first, Some((&execution_seed, step as u64)))?;
        let step_cost = cost.running(&x, &u0);
        log::debug!("mppi step {step}: running cost {step_cost}");
        x = executed.final_state().to_vec();
        log.step_costs.push(step_cost);
        log.executed_controls.push(u0);
        log.executed_states.push(x.clone());
        u.shift_left();
    }
    Ok(log)
}
