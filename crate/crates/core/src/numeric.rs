//! Stable log-space aggregation.
//!
//! Every `exp(E/τ)` sum in the crate goes through [`log_sum_exp`]; energies
//! grow with the horizon and overflow naive exponentials.

// redundant when another crate in the graph links std
#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use crate::{Error, Result};

/// `log Σ exp(v_k)` with a max shift.
///
/// `-inf` entries contribute nothing; if all entries are `-inf` the result is
/// `-inf`. NaN and `+inf` are rejected.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("log_sum_exp values"));
    }
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::NonFinite("log_sum_exp values"));
        }
        max = max.max(v);
    }
    if max == f64::NEG_INFINITY {
        return Ok(max);
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Normalized `exp(a_k) / Σ exp(a_j)` for arbitrary log-weights.
///
/// Fails with [`Error::DegenerateBatch`] when every exponent is `-inf`.
pub fn normalized_exp(exponents: &[f64]) -> Result<Vec<f64>> {
    let lse = log_sum_exp(exponents)?;
    if lse == f64::NEG_INFINITY {
        return Err(Error::DegenerateBatch);
    }
    let mut weights: Vec<f64> = exponents.iter().map(|&a| (a - lse).exp()).collect();
    // second pass pins the sum to 1 at rounding level
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// The MPPI weight fraction `exp(E_i/τ) / Σ_j exp(E_j/τ)`.
pub fn softmax_weights(energies: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    let exponents: Vec<f64> = energies.iter().map(|&e| e / temperature).collect();
    normalized_exp(&exponents)
}

pub(crate) fn check_temperature(temperature: f64) -> Result<()> {
    if temperature.is_finite() && temperature > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("temperature", "must be finite and > 0"))
    }
}

/// Effective sample size `1 / Σ w_i²`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().map(|w| w * w).sum();
    1.0 / s
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::LN_2;

    #[test]
    fn lse_examples() {
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - LN_2).abs() < 1e-15);
        assert!((log_sum_exp(&[1000.0, 1000.0]).unwrap() - (1000.0 + LN_2)).abs() < 1e-12);
        // direct summation at small magnitudes
        let direct = (0f64.exp() + 1f64.exp() + 2f64.exp()).ln();
        let v = log_sum_exp(&[0.0, 1.0, 2.0]).unwrap();
        assert!((v - direct).abs() < 1e-14);
        assert!((v - 2.4076).abs() < 1e-4);
    }

    #[test]
    fn lse_rejects_empty_and_nan() {
        assert_eq!(log_sum_exp(&[]), Err(Error::Empty("log_sum_exp values")));
        assert!(log_sum_exp(&[0.0, f64::NAN]).is_err());
        assert!(log_sum_exp(&[f64::INFINITY]).is_err());
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]).unwrap(), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[f64::NEG_INFINITY, 0.0]).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn lse_far_apart_values() {
        let v = log_sum_exp(&[-700.0, 0.0]).unwrap();
        assert!(v.is_finite() && v >= 0.0);
    }

    #[test]
    fn softmax_examples() {
        let w = softmax_weights(&[2.5, 2.5, 2.5], 0.7).unwrap();
        for x in &w {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(softmax_weights(&[-4.0], 1.0).unwrap(), [1.0]);
        let w = softmax_weights(&[0.0, 3f64.ln()], 1.0).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_bad_temperature() {
        assert!(softmax_weights(&[0.0], 0.0).is_err());
        assert!(softmax_weights(&[0.0], -1.0).is_err());
        assert!(softmax_weights(&[0.0], f64::NAN).is_err());
    }

    #[test]
    fn all_neg_inf_is_degenerate() {
        assert_eq!(
            softmax_weights(&[f64::NEG_INFINITY, f64::NEG_INFINITY], 1.0),
            Err(Error::DegenerateBatch)
        );
    }
}
