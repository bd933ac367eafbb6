// redundant when another crate in the graph links std
#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use crate::numeric::{effective_sample_size, normalized_exp};
use crate::rng::standard_normal;
use crate::{ControlSequence, Error, NoiseKernel, Result, RunSeed};

/// Perturbation `i` of a batch: every step drawn from N(0, Σ).
///
/// Depends only on `(seed, index)`, never on the batch size.
pub fn sample_perturbation(
    kernel: &NoiseKernel,
    horizon: usize,
    seed: &RunSeed,
    index: u64,
) -> Result<ControlSequence> {
    let m = kernel.dim();
    let mut rng = seed.rng(index);
    let mut data = vec![0.0; horizon * m];
    let mut z = vec![0.0; m];
    for block in data.chunks_exact_mut(m) {
        for zi in z.iter_mut() {
            *zi = standard_normal(&mut rng);
        }
        kernel.covariance().color(&z, block);
    }
    ControlSequence::from_flat(m, data)
}

/// `N` independent perturbation sequences of length `horizon`.
pub fn sample_perturbations(
    kernel: &NoiseKernel,
    horizon: usize,
    samples: usize,
    seed: &RunSeed,
) -> Result<Vec<ControlSequence>> {
    if samples == 0 {
        return Err(Error::invalid("samples", "must be >= 1"));
    }
    if horizon == 0 {
        return Err(Error::invalid("horizon", "must be >= 1"));
    }
    (0..samples as u64)
        .map(|i| sample_perturbation(kernel, horizon, seed, i))
        .collect()
}

/// Sampled perturbations with their energies and normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationBatch {
    perturbations: Vec<ControlSequence>,
    energies: Vec<f64>,
    exponents: Vec<f64>,
    weights: Vec<f64>,
    temperature: f64,
}

impl PerturbationBatch {
    /// Weights `∝ exp(E_i / τ)`.
    pub fn from_energies(
        perturbations: Vec<ControlSequence>,
        energies: Vec<f64>,
        temperature: f64,
    ) -> Result<Self> {
        crate::numeric::check_temperature(temperature)?;
        let exponents = energies.iter().map(|e| e / temperature).collect();
        Self::from_exponents(perturbations, energies, exponents, temperature)
    }

    /// Weights `∝ exp(a_i)` for caller-supplied exponents.
    pub fn from_exponents(
        perturbations: Vec<ControlSequence>,
        energies: Vec<f64>,
        exponents: Vec<f64>,
        temperature: f64,
    ) -> Result<Self> {
        crate::numeric::check_temperature(temperature)?;
        if perturbations.is_empty() {
            return Err(Error::Empty("perturbation batch"));
        }
        Error::check_dim("batch energies", perturbations.len(), energies.len())?;
        Error::check_dim("batch exponents", perturbations.len(), exponents.len())?;
        let first = &perturbations[0];
        for p in &perturbations[1..] {
            first.check_shape(p)?;
        }
        if energies.iter().any(|e| e.is_nan() || *e == f64::INFINITY) {
            return Err(Error::NonFinite("batch energies"));
        }
        let weights = normalized_exp(&exponents)?;
        if let Some(w) = weights.iter().copied().reduce(f64::max) {
            if w > 1.0 - 1e-12 && perturbations.len() > 1 {
                log::warn!("perturbation batch collapsed onto a single sample");
            }
        }
        Ok(PerturbationBatch {
            perturbations,
            energies,
            exponents,
            weights,
            temperature,
        })
    }

    pub fn len(&self) -> usize {
        self.perturbations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perturbations.is_empty()
    }

    pub fn perturbations(&self) -> &[ControlSequence] {
        &self.perturbations
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// `Σ_i w_i E_i`, accumulated in sample order.
    pub fn direction(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.perturbations[0].as_slice().len()];
        for (p, w) in self.perturbations.iter().zip(&self.weights) {
            for (di, e) in d.iter_mut().zip(p.as_slice()) {
                *di += w * e;
            }
        }
        d
    }

    /// Per-coordinate delta-method standard error of the self-normalized
    /// direction: `sqrt(Σ_i w_i² (ε_i − d)²)`.
    pub fn direction_standard_error(&self) -> Vec<f64> {
        let d = self.direction();
        let mut var = vec![0.0; d.len()];
        for (p, w) in self.perturbations.iter().zip(&self.weights) {
            for ((v, e), di) in var.iter_mut().zip(p.as_slice()).zip(&d) {
                *v += w * w * (e - di) * (e - di);
            }
        }
        var.into_iter().map(f64::sqrt).collect()
    }

    pub fn effective_sample_size(&self) -> f64 {
        effective_sample_size(&self.weights)
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    pub fn best_energy(&self) -> f64 {
        self.energies
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_normalized_and_shape_checked() {
        let p = vec![
            ControlSequence::from_scalars(&[1.0]).unwrap(),
            ControlSequence::from_scalars(&[2.0]).unwrap(),
        ];
        let b = PerturbationBatch::from_energies(p.clone(), vec![0.0, 1.0], 1.0).unwrap();
        let s: f64 = b.weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        let bad = vec![p[0].clone(), ControlSequence::from_scalars(&[1.0, 2.0]).unwrap()];
        assert!(PerturbationBatch::from_energies(bad, vec![0.0, 0.0], 1.0).is_err());
        assert!(PerturbationBatch::from_energies(p, vec![0.0], 1.0).is_err());
    }

    #[test]
    fn zero_variance_kernel_is_rejected() {
        assert!(NoiseKernel::isotropic(1, 0.0, 1.0).is_err());
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let k = NoiseKernel::isotropic(2, 0.5, 1.0).unwrap();
        let s = RunSeed::new(9);
        let a = sample_perturbations(&k, 5, 10, &s).unwrap();
        let b = sample_perturbations(&k, 5, 10, &s).unwrap();
        let c = sample_perturbations(&k, 5, 25, &s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[..], c[..10]);
    }
}

/// Strategy for generating and scoring a batch.
///
/// Implementations must return results ordered by sample index so reductions
/// are independent of how the work was scheduled.
pub trait BatchRunner {
    fn perturbations(
        &self,
        kernel: &NoiseKernel,
        horizon: usize,
        samples: usize,
        seed: &RunSeed,
    ) -> Result<Vec<ControlSequence>>;

    /// `E(base + p_i)` for every perturbation.
    fn energies<E: crate::EnergyModel + Sync>(
        &self,
        energy: &E,
        base: &ControlSequence,
        perturbations: &[ControlSequence],
    ) -> Vec<f64>;
}

/// Single-threaded runner.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl BatchRunner for Serial {
    fn perturbations(
        &self,
        kernel: &NoiseKernel,
        horizon: usize,
        samples: usize,
        seed: &RunSeed,
    ) -> Result<Vec<ControlSequence>> {
        sample_perturbations(kernel, horizon, samples, seed)
    }

    fn energies<E: crate::EnergyModel + Sync>(
        &self,
        energy: &E,
        base: &ControlSequence,
        perturbations: &[ControlSequence],
    ) -> Vec<f64> {
        let mut buf = vec![0.0; base.as_slice().len()];
        perturbations
            .iter()
            .map(|p| {
                for ((b, u), e) in buf.iter_mut().zip(base.as_slice()).zip(p.as_slice()) {
                    *b = u + e;
                }
                energy.energy(&buf)
            })
            .collect()
    }
}
