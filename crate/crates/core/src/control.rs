// redundant when another crate in the graph links std
#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Control sequence `U = (u_0, …, u_{T-1})`, stored flat (step-major).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControlSequence {
    dim: usize,
    data: Vec<f64>,
}

impl ControlSequence {
    pub fn zeros(horizon: usize, dim: usize) -> Result<Self> {
        if horizon == 0 || dim == 0 {
            return Err(Error::invalid("horizon", "horizon and control dimension must be >= 1"));
        }
        Ok(ControlSequence {
            dim,
            data: vec![0.0; horizon * dim],
        })
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                what: "flat control sequence (multiple of control dimension)",
                expected: dim,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("control sequence"));
        }
        Ok(ControlSequence { dim, data })
    }

    /// Scalar controls, one per step.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::from_flat(1, values.to_vec())
    }

    pub fn horizon(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn step(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn steps(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn same_shape(&self, other: &ControlSequence) -> bool {
        self.dim == other.dim && self.data.len() == other.data.len()
    }

    pub(crate) fn check_shape(&self, other: &ControlSequence) -> Result<()> {
        Error::check_dim("control dimension", self.dim, other.dim)?;
        Error::check_dim("control sequence length", self.data.len(), other.data.len())
    }

    /// `self + scale · other`.
    pub fn add_scaled(&self, scale: f64, other: &[f64]) -> Result<ControlSequence> {
        Error::check_dim("control sequence length", self.data.len(), other.len())?;
        let data = self
            .data
            .iter()
            .zip(other)
            .map(|(a, b)| a + scale * b)
            .collect();
        ControlSequence::from_flat(self.dim, data)
    }

    /// Receding-horizon shift: drop `u_0`, append a zero step.
    pub fn shift_left(&mut self) {
        self.data.rotate_left(self.dim);
        let n = self.data.len();
        self.data[n - self.dim..].fill(0.0);
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}
