//! Trajectory optimization as gradient ascent on a Gaussian-smoothed Gibbs measure.
//!
//! Three samplers share one update rule here: MPPI ([`mppi`]), the
//! exponential-objective policy gradient ([`policygrad`]) and discretized
//! reverse diffusion ([`diffusion`], [`planner`]). The [`smoothed`] module
//! carries the smoothed energy and the quadrature oracles used to check that
//! these updates agree.
//!
//! The crate is `no_std` and only needs `alloc`. Floating-point math comes
//! from `std` (the default feature) or, with `default-features = false`,
//! from the `libm` feature. All randomness is drawn from counter-based
//! ChaCha streams keyed by [`RunSeed`], so batch contents never
//! depend on evaluation order.
#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

#[cfg(not(any(feature = "std", feature = "libm")))]
compile_error!("enable the `std` or `libm` feature for floating-point math");

mod batch;
mod control;
mod energy;
mod error;
mod kernel;
pub mod numeric;
mod rng;

pub mod diffusion;
pub mod envs;
pub mod landscapes;
pub mod mppi;
pub mod planner;
pub mod policygrad;
pub mod smoothed;

pub use batch::{sample_perturbation, sample_perturbations, BatchRunner, PerturbationBatch, Serial};
pub use control::ControlSequence;
pub use energy::{EnergyModel, FnEnergy, GibbsMeasure};
pub use error::{Error, Result};
pub use kernel::{Covariance, NoiseKernel};
pub use numeric::{log_sum_exp, normalized_exp, softmax_weights};
pub use rng::{RunSeed, StreamRng};
