// redundant when another crate in the graph links std
#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use crate::numeric::check_temperature;
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Per-step Gaussian covariance Σ, diagonal or dense.
///
/// Sequence-level operations treat the full control sequence covariance as
/// block-diagonal with this block repeated for every step.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Covariance {
    dim: usize,
    /// row-major Σ
    matrix: Vec<f64>,
    /// row-major lower Cholesky factor
    chol: Vec<f64>,
    diagonal: bool,
}

impl Covariance {
    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::Empty("covariance diagonal"));
        }
        let dim = variances.len();
        let mut matrix = vec![0.0; dim * dim];
        let mut chol = vec![0.0; dim * dim];
        for (i, &v) in variances.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(
                    "covariance",
                    "diagonal entries must be finite and > 0",
                ));
            }
            matrix[i * dim + i] = v;
            chol[i * dim + i] = v.sqrt();
        }
        Ok(Covariance {
            dim,
            matrix,
            chol,
            diagonal: true,
        })
    }

    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        Self::diagonal(&vec![variance; dim])
    }

    /// Dense symmetric positive-definite Σ (row-major, `dim × dim`).
    pub fn full(dim: usize, matrix: &[f64]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty("covariance"));
        }
        Error::check_dim("covariance entries", dim * dim, matrix.len())?;
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariance"));
        }
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (matrix[i * dim + j], matrix[j * dim + i]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::invalid("covariance", "matrix is not symmetric"));
                }
            }
        }
        let mut chol = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let mut s = matrix[i * dim + j];
                for k in 0..j {
                    s -= chol[i * dim + k] * chol[j * dim + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::invalid("covariance", "matrix is not positive-definite"));
                    }
                    chol[i * dim + i] = s.sqrt();
                } else {
                    chol[i * dim + j] = s / chol[j * dim + j];
                }
            }
        }
        Ok(Covariance {
            dim,
            matrix: matrix.to_vec(),
            chol,
            diagonal: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn variance(&self, axis: usize) -> f64 {
        self.matrix[axis * self.dim + axis]
    }

    /// `Σ v` for one block.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (i, o) in out[..d].iter_mut().enumerate() {
            *o = (0..d).map(|j| self.matrix[i * d + j] * v[j]).sum();
        }
    }

    /// `L z`, mapping standard normal draws to N(0, Σ).
    pub fn color(&self, z: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (i, o) in out[..d].iter_mut().enumerate() {
            *o = (0..=i).map(|j| self.chol[i * d + j] * z[j]).sum();
        }
    }

    /// `Σ⁻¹ v` for one block by two triangular solves.
    pub fn solve(&self, v: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let l = &self.chol;
        for i in 0..d {
            let s: f64 = (0..i).map(|k| l[i * d + k] * out[k]).sum();
            out[i] = (v[i] - s) / l[i * d + i];
        }
        for i in (0..d).rev() {
            let s: f64 = (i + 1..d).map(|k| l[k * d + i] * out[k]).sum();
            out[i] = (out[i] - s) / l[i * d + i];
        }
    }

    pub fn log_det(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.chol[i * self.dim + i].ln())
            .sum::<f64>()
            * 2.0
    }

    /// `vᵀ Σ⁻¹ v`.
    pub fn mahalanobis_sq(&self, v: &[f64]) -> f64 {
        // forward solve only: ‖L⁻¹ v‖²
        let d = self.dim;
        let mut y = [0.0f64; 8];
        let mut heap;
        let y: &mut [f64] = if d <= 8 {
            &mut y[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        for i in 0..d {
            let s: f64 = (0..i).map(|k| self.chol[i * d + k] * y[k]).sum();
            y[i] = (v[i] - s) / self.chol[i * d + i];
        }
        y.iter().map(|x| x * x).sum()
    }

    /// Gaussian log density of a zero-mean block at `delta`.
    pub fn log_density(&self, delta: &[f64]) -> f64 {
        -0.5 * (self.dim as f64 * LN_2PI + self.log_det() + self.mahalanobis_sq(delta))
    }
}

/// Gaussian smoothing/sampling kernel φ = N(0, Σ) with temperature τ.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseKernel {
    covariance: Covariance,
    temperature: f64,
}

impl NoiseKernel {
    pub fn new(covariance: Covariance, temperature: f64) -> Result<Self> {
        check_temperature(temperature)?;
        Ok(NoiseKernel {
            covariance,
            temperature,
        })
    }

    /// Isotropic kernel `σ² I_m` with temperature τ.
    pub fn isotropic(dim: usize, variance: f64, temperature: f64) -> Result<Self> {
        Self::new(Covariance::isotropic(dim, variance)?, temperature)
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Control dimension m of one block.
    pub fn dim(&self) -> usize {
        self.covariance.dim()
    }

    fn blocks<'a>(&self, v: &'a [f64]) -> Result<core::slice::ChunksExact<'a, f64>> {
        let m = self.dim();
        if v.is_empty() || !v.len().is_multiple_of(m) {
            return Err(Error::DimensionMismatch {
                what: "sequence length (multiple of control dimension)",
                expected: m,
                found: v.len(),
            });
        }
        Ok(v.chunks_exact(m))
    }

    /// Block-diagonal `Σ v` over a flat sequence.
    pub fn apply_sequence(&self, v: &[f64]) -> Result<Vec<f64>> {
        let m = self.dim();
        let mut out = vec![0.0; v.len()];
        for (block, o) in self.blocks(v)?.zip(out.chunks_exact_mut(m)) {
            self.covariance.apply(block, o);
        }
        Ok(out)
    }

    /// Block-diagonal `Σ⁻¹ v` over a flat sequence.
    pub fn solve_sequence(&self, v: &[f64]) -> Result<Vec<f64>> {
        let m = self.dim();
        let mut out = vec![0.0; v.len()];
        for (block, o) in self.blocks(v)?.zip(out.chunks_exact_mut(m)) {
            self.covariance.solve(block, o);
        }
        Ok(out)
    }

    /// `log φ(delta)` for a flat sequence with block-diagonal Σ.
    pub fn log_density_sequence(&self, delta: &[f64]) -> Result<f64> {
        Ok(self
            .blocks(delta)?
            .map(|b| self.covariance.log_density(b))
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_rejects_zero_variance() {
        assert!(Covariance::diagonal(&[1.0, 0.0]).is_err());
        assert!(Covariance::diagonal(&[]).is_err());
        assert!(NoiseKernel::isotropic(1, 1.0, 0.0).is_err());
    }

    #[test]
    fn full_solve_inverts_apply() {
        let c = Covariance::full(2, &[2.0, 0.6, 0.6, 1.0]).unwrap();
        let v = [0.3, -1.7];
        let mut sv = [0.0; 2];
        let mut back = [0.0; 2];
        c.apply(&v, &mut sv);
        c.solve(&sv, &mut back);
        assert!((back[0] - v[0]).abs() < 1e-14 && (back[1] - v[1]).abs() < 1e-14);
        assert!((c.log_det() - (2.0f64 - 0.36).ln()).abs() < 1e-14);
        // vᵀΣ⁻¹v against the explicit 2x2 inverse
        let det = 2.0 - 0.36;
        let expected = (1.0 * v[0] * v[0] - 2.0 * 0.6 * v[0] * v[1] + 2.0 * v[1] * v[1]) / det;
        assert!((c.mahalanobis_sq(&v) - expected).abs() < 1e-13);
    }

    #[test]
    fn full_rejects_indefinite_and_asymmetric() {
        assert!(Covariance::full(2, &[1.0, 2.0, 2.0, 1.0]).is_err());
        assert!(Covariance::full(2, &[1.0, 0.1, 0.2, 1.0]).is_err());
    }

    #[test]
    fn standard_normal_log_density() {
        let c = Covariance::isotropic(1, 1.0).unwrap();
        assert!((c.log_density(&[0.0]) + 0.5 * LN_2PI).abs() < 1e-15);
    }
}
