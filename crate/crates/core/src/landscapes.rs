//! Test energies with known structure: constant, quadratic, asymmetric double
//! well and random Fourier features.

// redundant when another crate in the graph links std
#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use crate::rng::standard_normal;
use crate::{EnergyModel, Error, Result, RunSeed};

/// `E ≡ c` on `dim` coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant {
    pub dim: usize,
    pub value: f64,
}

impl EnergyModel for Constant {
    fn dim(&self) -> usize {
        self.dim
    }
    fn energy(&self, _x: &[f64]) -> f64 {
        self.value
    }
    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; self.dim])
    }
}

/// `E(u) = −(c/2) ‖u − m‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub center: Vec<f64>,
    pub curvature: f64,
}

impl Quadratic {
    pub fn standard(dim: usize) -> Self {
        Quadratic {
            center: vec![0.0; dim],
            curvature: 1.0,
        }
    }
}

impl EnergyModel for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn energy(&self, x: &[f64]) -> f64 {
        -0.5 * self.curvature * x.iter().zip(&self.center).map(|(a, m)| (a - m) * (a - m)).sum::<f64>()
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(x.iter().zip(&self.center).map(|(a, m)| -self.curvature * (a - m)).collect())
    }
}

/// 1D `E(u) = −h (u² − 1)² + a u`: wells at `u ≈ ±1`, tilted by `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleWell {
    pub height: f64,
    pub tilt: f64,
}

impl Default for DoubleWell {
    fn default() -> Self {
        DoubleWell { height: 1.0, tilt: 0.3 }
    }
}

impl EnergyModel for DoubleWell {
    fn dim(&self) -> usize {
        1
    }
    fn energy(&self, x: &[f64]) -> f64 {
        let u = x[0];
        -self.height * (u * u - 1.0).powi(2) + self.tilt * u
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let u = x[0];
        Some(vec![-4.0 * self.height * u * (u * u - 1.0) + self.tilt])
    }
}

/// `E(u) = Σ_k a_k cos(ω_k·u + φ_k)` with bounded derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierFeatures {
    dim: usize,
    amplitudes: Vec<f64>,
    /// `features × dim`
    frequencies: Vec<f64>,
    phases: Vec<f64>,
}

impl FourierFeatures {
    /// `features` terms with `a_k ~ N(0, 1/K)`, `ω_k ~ N(0, bandwidth² I)`,
    /// `φ_k ~ U(0, 2π)`, all from stream `index` of `seed`.
    pub fn random(dim: usize, features: usize, bandwidth: f64, seed: &RunSeed, index: u64) -> Result<Self> {
        if dim == 0 || features == 0 {
            return Err(Error::invalid("features", "dimension and feature count must be >= 1"));
        }
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::invalid("bandwidth", "must be finite and > 0"));
        }
        use rand::Rng;
        let mut rng = seed.rng(index);
        let scale = 1.0 / (features as f64).sqrt();
        let amplitudes = (0..features).map(|_| scale * standard_normal(&mut rng)).collect();
        let frequencies = (0..features * dim).map(|_| bandwidth * standard_normal(&mut rng)).collect();
        let phases = (0..features)
            .map(|_| core::f64::consts::TAU * rng.random::<f64>())
            .collect();
        Ok(FourierFeatures {
            dim,
            amplitudes,
            frequencies,
            phases,
        })
    }

    fn argument(&self, k: usize, x: &[f64]) -> f64 {
        let w = &self.frequencies[k * self.dim..(k + 1) * self.dim];
        w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.phases[k]
    }
}

impl EnergyModel for FourierFeatures {
    fn dim(&self) -> usize {
        self.dim
    }
    fn energy(&self, x: &[f64]) -> f64 {
        (0..self.amplitudes.len())
            .map(|k| self.amplitudes[k] * self.argument(k, x).cos())
            .sum()
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut g = vec![0.0; self.dim];
        for k in 0..self.amplitudes.len() {
            let c = -self.amplitudes[k] * self.argument(k, x).sin();
            for (gi, w) in g.iter_mut().zip(&self.frequencies[k * self.dim..(k + 1) * self.dim]) {
                *gi += c * w;
            }
        }
        Some(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(e: &impl EnergyModel, x: f64) -> f64 {
        let h = 1e-6;
        (e.energy(&[x + h]) - e.energy(&[x - h])) / (2.0 * h)
    }

    #[test]
    fn gradients_match_differences() {
        let f = FourierFeatures::random(1, 16, 1.5, &RunSeed::new(3), 0).unwrap();
        let w = DoubleWell::default();
        for x in [-1.7, -0.2, 0.4, 2.1] {
            assert!((f.gradient(&[x]).unwrap()[0] - fd(&f, x)).abs() < 1e-6);
            assert!((w.gradient(&[x]).unwrap()[0] - fd(&w, x)).abs() < 1e-5);
        }
    }

    #[test]
    fn random_features_are_seeded() {
        let a = FourierFeatures::random(2, 8, 1.0, &RunSeed::new(1), 4).unwrap();
        assert_eq!(a, FourierFeatures::random(2, 8, 1.0, &RunSeed::new(1), 4).unwrap());
        assert_ne!(a, FourierFeatures::random(2, 8, 1.0, &RunSeed::new(1), 5).unwrap());
    }
}
