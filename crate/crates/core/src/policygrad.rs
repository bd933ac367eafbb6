//! Score-function estimators for an open-loop Gaussian policy.
//!
//! The policy mean for step `t` is the control `u_t`; the covariance Σ is
//! shared and independent of the parameters. With `a_t = u_t + ε_t`,
//! `∇_{u_t} log π(a_t) = Σ⁻¹ ε_t`, so the vanilla estimator is
//! `Σ⁻¹ (1/N) Σ_i ε_{t,i} R_i` and the exponential-objective estimator
//! replaces `R_i` with `exp(R_i / τ)`.

// redundant when another crate in the graph links std
#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use crate::batch::sample_perturbations;
use crate::{
    BatchRunner, ControlSequence, Covariance, EnergyModel, Error, NoiseKernel, PerturbationBatch,
    Result, RunSeed, Serial,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Open-loop Gaussian policy `π(a_t) = N(u_t, Σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianOpenLoopPolicy {
    means: ControlSequence,
    covariance: Covariance,
}

impl GaussianOpenLoopPolicy {
    pub fn new(means: ControlSequence, covariance: Covariance) -> Result<Self> {
        Error::check_dim("policy covariance", means.dim(), covariance.dim())?;
        Ok(GaussianOpenLoopPolicy { means, covariance })
    }

    pub fn means(&self) -> &ControlSequence {
        &self.means
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    pub fn set_means(&mut self, means: ControlSequence) -> Result<()> {
        self.means.check_shape(&means)?;
        self.means = means;
        Ok(())
    }

    /// Sampling kernel with temperature τ.
    pub fn kernel(&self, temperature: f64) -> Result<NoiseKernel> {
        NoiseKernel::new(self.covariance.clone(), temperature)
    }
}

/// `log π(a | t) = −D/2 ln 2π − ½ ln|Σ| − ½ (a − μ_t)ᵀ Σ⁻¹ (a − μ_t)`.
pub fn log_policy_density(policy: &GaussianOpenLoopPolicy, action: &[f64], t: usize) -> Result<f64> {
    let d = policy.covariance.dim();
    Error::check_dim("action", d, action.len())?;
    if t >= policy.means.horizon() {
        return Err(Error::IndexOutOfRange {
            index: t,
            len: policy.means.horizon(),
        });
    }
    let delta: Vec<f64> = action
        .iter()
        .zip(policy.means.step(t))
        .map(|(a, m)| a - m)
        .collect();
    Ok(-0.5 * (d as f64 * LN_2PI + policy.covariance.log_det())
        - 0.5 * policy.covariance.mahalanobis_sq(&delta))
}

fn weighted_mean(perturbations: &[ControlSequence], weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let n = perturbations.len() as f64;
    let mut acc = alloc::vec![0.0; perturbations[0].as_slice().len()];
    for (p, w) in perturbations.iter().zip(weights) {
        for (a, e) in acc.iter_mut().zip(p.as_slice()) {
            *a += w * e;
        }
    }
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

fn block_solve(policy: &GaussianOpenLoopPolicy, v: &[f64]) -> Result<ControlSequence> {
    let d = policy.covariance.dim();
    let mut out = alloc::vec![0.0; v.len()];
    for (b, o) in v.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        policy.covariance.solve(b, o);
    }
    ControlSequence::from_flat(d, out)
}

/// Vanilla estimator from explicit perturbations and returns.
pub fn pg_estimate_from(
    policy: &GaussianOpenLoopPolicy,
    perturbations: &[ControlSequence],
    returns: &[f64],
) -> Result<ControlSequence> {
    if perturbations.is_empty() {
        return Err(Error::Empty("policy gradient batch"));
    }
    Error::check_dim("returns", perturbations.len(), returns.len())?;
    for p in perturbations {
        policy.means.check_shape(p)?;
    }
    let mean = weighted_mean(perturbations, returns.iter().copied());
    block_solve(policy, &mean)
}

/// Exponential-objective estimate held as `exp(log_scale) · scaled`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpGradient {
    pub scaled: ControlSequence,
    /// `max_i R_i / τ`, factored out before exponentiation.
    pub log_scale: f64,
}

impl ExpGradient {
    /// Unscaled value; may overflow to infinity for large returns.
    pub fn value(&self) -> Vec<f64> {
        let s = self.log_scale.exp();
        self.scaled.as_slice().iter().map(|v| v * s).collect()
    }
}

/// Exponential-objective estimator from explicit perturbations and returns.
pub fn pg_exp_estimate_from(
    policy: &GaussianOpenLoopPolicy,
    perturbations: &[ControlSequence],
    returns: &[f64],
    temperature: f64,
) -> Result<ExpGradient> {
    crate::numeric::check_temperature(temperature)?;
    if perturbations.is_empty() {
        return Err(Error::Empty("policy gradient batch"));
    }
    Error::check_dim("returns", perturbations.len(), returns.len())?;
    let log_scale = returns
        .iter()
        .map(|r| r / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    if log_scale.is_nan() || log_scale == f64::INFINITY {
        return Err(Error::NonFinite("returns"));
    }
    if log_scale == f64::NEG_INFINITY {
        return Err(Error::DegenerateBatch);
    }
    for p in perturbations {
        policy.means.check_shape(p)?;
    }
    let mean = weighted_mean(
        perturbations,
        returns.iter().map(|r| (r / temperature - log_scale).exp()),
    );
    Ok(ExpGradient {
        scaled: block_solve(policy, &mean)?,
        log_scale,
    })
}

fn rollout_batch<E: EnergyModel + Sync>(
    policy: &GaussianOpenLoopPolicy,
    energy: &E,
    samples: usize,
    seed: &RunSeed,
) -> Result<(Vec<ControlSequence>, Vec<f64>)> {
    Error::check_dim("energy dimension", policy.means.as_slice().len(), energy.dim())?;
    let kernel = policy.kernel(1.0)?;
    let eps = sample_perturbations(&kernel, policy.means.horizon(), samples, seed)?;
    let returns = Serial.energies(energy, &policy.means, &eps);
    Ok((eps, returns))
}

/// Vanilla score-function estimate of `∇_U E[R]` from `N` fresh rollouts.
pub fn pg_estimate<E: EnergyModel + Sync>(
    policy: &GaussianOpenLoopPolicy,
    energy: &E,
    samples: usize,
    seed: &RunSeed,
) -> Result<ControlSequence> {
    let (eps, returns) = rollout_batch(policy, energy, samples, seed)?;
    pg_estimate_from(policy, &eps, &returns)
}

/// Exponential-objective estimate of `∇_U E[exp(R/τ)]`.
pub fn pg_exp_estimate<E: EnergyModel + Sync>(
    policy: &GaussianOpenLoopPolicy,
    energy: &E,
    samples: usize,
    temperature: f64,
    seed: &RunSeed,
) -> Result<ExpGradient> {
    let (eps, returns) = rollout_batch(policy, energy, samples, seed)?;
    pg_exp_estimate_from(policy, &eps, &returns, temperature)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    /// MPPI direction `Σ_i w_i ε_i` on the batch.
    pub mppi_direction: Vec<f64>,
    /// `Σ · g_exp · N / Σ_i exp(R_i/τ)`.
    pub reconstructed: Vec<f64>,
    /// relative residual between the two
    pub residual: f64,
    /// same reconstruction with exp replaced by the identity (vanilla PG)
    pub negative_control_residual: f64,
}

impl IdentityReport {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.residual <= tolerance
    }
}

fn relative_residual(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Checks on one batch that the MPPI direction equals the exponential policy
/// gradient rescaled by `Σ · N / Σ_i exp(R_i/τ)`.
///
/// The MPPI side uses the batch's log-sum-exp weights; the policy-gradient
/// side recomputes everything from the raw perturbations and returns.
pub fn check_pg_mppi_identity(
    policy: &GaussianOpenLoopPolicy,
    batch: &PerturbationBatch,
) -> Result<IdentityReport> {
    if batch.is_empty() {
        return Err(Error::Empty("perturbation batch"));
    }
    let tau = batch.temperature();
    let n = batch.len() as f64;
    let returns = batch.energies();
    let mppi_direction = batch.direction();

    let kernel = policy.kernel(tau)?;
    let g = pg_exp_estimate_from(policy, batch.perturbations(), returns, tau)?;
    let normalizer: f64 = returns.iter().map(|r| (r / tau - g.log_scale).exp()).sum();
    let reconstructed: Vec<f64> = kernel
        .apply_sequence(g.scaled.as_slice())?
        .into_iter()
        .map(|v| v * n / normalizer)
        .collect();

    let vanilla = pg_estimate_from(policy, batch.perturbations(), &returns.iter().map(|r| r / tau).collect::<Vec<_>>())?;
    let vanilla_norm: f64 = returns.iter().map(|r| r / tau).sum();
    let control: Vec<f64> = kernel
        .apply_sequence(vanilla.as_slice())?
        .into_iter()
        .map(|v| v * n / vanilla_norm)
        .collect();

    Ok(IdentityReport {
        residual: relative_residual(&reconstructed, &mppi_direction),
        negative_control_residual: relative_residual(&control, &mppi_direction),
        mppi_direction,
        reconstructed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::FnEnergy;

    fn policy_1d(means: &[f64], var: f64) -> GaussianOpenLoopPolicy {
        GaussianOpenLoopPolicy::new(
            ControlSequence::from_scalars(means).unwrap(),
            Covariance::isotropic(1, var).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn log_density_values() {
        let p = policy_1d(&[0.3], 1.0);
        let mode = log_policy_density(&p, &[0.3], 0).unwrap();
        assert!((mode + 0.5 * LN_2PI).abs() < 1e-15);
        let off = log_policy_density(&p, &[1.3], 0).unwrap();
        assert!((off - (-0.5 * LN_2PI - 0.5)).abs() < 1e-15);
        let wide = policy_1d(&[0.3], 2.0);
        let drop = mode - log_policy_density(&wide, &[0.3], 0).unwrap();
        assert!((drop - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!(log_policy_density(&p, &[0.0], 1).is_err());
    }

    #[test]
    fn log_density_per_dimension() {
        let p = GaussianOpenLoopPolicy::new(
            ControlSequence::zeros(1, 3).unwrap(),
            Covariance::isotropic(3, 1.0).unwrap(),
        )
        .unwrap();
        let w = GaussianOpenLoopPolicy::new(
            ControlSequence::zeros(1, 3).unwrap(),
            Covariance::isotropic(3, 2.0).unwrap(),
        )
        .unwrap();
        let drop = log_policy_density(&p, &[0.0; 3], 0).unwrap() - log_policy_density(&w, &[0.0; 3], 0).unwrap();
        assert!((drop - 1.5 * 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn single_sample_estimate() {
        let p = policy_1d(&[0.0], 1.0);
        let eps = [ControlSequence::from_scalars(&[0.5]).unwrap()];
        let g = pg_estimate_from(&p, &eps, &[2.0]).unwrap();
        assert!((g.as_slice()[0] - 1.0).abs() < 1e-15);
        let ge = pg_exp_estimate_from(&p, &eps, &[2.0], 1.0).unwrap();
        assert!((ge.value()[0] - 0.5 * 2f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn exp_estimate_guards_overflow() {
        let p = policy_1d(&[0.0], 1.0);
        let eps = [
            ControlSequence::from_scalars(&[0.5]).unwrap(),
            ControlSequence::from_scalars(&[-0.5]).unwrap(),
        ];
        let g = pg_exp_estimate_from(&p, &eps, &[5000.0, 4999.0], 1.0).unwrap();
        assert_eq!(g.log_scale, 5000.0);
        assert!(g.scaled.as_slice()[0].is_finite());
    }

    #[test]
    fn identity_on_equal_returns() {
        let p = policy_1d(&[0.1, 0.2], 0.5);
        let eps: Vec<_> = [[0.1, 0.4], [-0.3, 0.2], [0.5, -0.1]]
            .iter()
            .map(|e| ControlSequence::from_scalars(e).unwrap())
            .collect();
        let batch = PerturbationBatch::from_energies(eps, alloc::vec![-1.0; 3], 1.0).unwrap();
        let r = check_pg_mppi_identity(&p, &batch).unwrap();
        assert!(r.holds(1e-12));
        assert!((r.mppi_direction[0] - 0.1).abs() < 1e-15);
        assert!((r.mppi_direction[1] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn constant_return_estimate_shrinks() {
        let p = policy_1d(&[0.0; 3], 1.0);
        let e = FnEnergy::new(3, |_: &[f64]| 1.0);
        let small = pg_estimate(&p, &e, 100, &RunSeed::new(1)).unwrap().norm();
        let large = pg_estimate(&p, &e, 10_000, &RunSeed::new(1)).unwrap().norm();
        assert!(large < small);
        assert!(large < 5.0 * (3.0f64 / 10_000.0).sqrt());
    }
}
