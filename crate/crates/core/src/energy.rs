// redundant when another crate in the graph links std
#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use crate::numeric::check_temperature;
use crate::Result;

/// Unified energy `E(U) := -J(U) := R(U) := log p̃(U)` over flat vectors.
///
/// Energies may return `-inf` to mark an invalid point (a diverged rollout);
/// NaN is never a valid energy.
pub trait EnergyModel {
    fn dim(&self) -> usize;

    fn energy(&self, x: &[f64]) -> f64;

    /// Analytic gradient, when one is available.
    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

impl<E: EnergyModel + ?Sized> EnergyModel for &E {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn energy(&self, x: &[f64]) -> f64 {
        (**self).energy(x)
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        (**self).gradient(x)
    }
}

/// Energy backed by a closure.
#[derive(Clone)]
pub struct FnEnergy<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64> FnEnergy<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnEnergy { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64> EnergyModel for FnEnergy<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn energy(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Gibbs measure `p(U) = exp(E(U)/τ) / Z`.
///
/// `Z` is optional; the quadrature routines in [`crate::smoothed`] compute it.
#[derive(Debug, Clone)]
pub struct GibbsMeasure<E> {
    energy: E,
    temperature: f64,
    log_normalizer: Option<f64>,
}

impl<E: EnergyModel> GibbsMeasure<E> {
    pub fn new(energy: E, temperature: f64) -> Result<Self> {
        check_temperature(temperature)?;
        Ok(GibbsMeasure {
            energy,
            temperature,
            log_normalizer: None,
        })
    }

    pub fn with_log_normalizer(mut self, log_z: f64) -> Self {
        self.log_normalizer = Some(log_z);
        self
    }

    pub fn energy(&self) -> &E {
        &self.energy
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn log_normalizer(&self) -> Option<f64> {
        self.log_normalizer
    }

    pub fn normalizer(&self) -> Option<f64> {
        self.log_normalizer.map(|l| l.exp())
    }

    pub fn log_unnormalized(&self, x: &[f64]) -> f64 {
        self.energy.energy(x) / self.temperature
    }

    /// Normalized log density; `None` until `Z` is known.
    pub fn log_density(&self, x: &[f64]) -> Option<f64> {
        self.log_normalizer.map(|l| self.log_unnormalized(x) - l)
    }
}
