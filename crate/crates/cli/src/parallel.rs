//! Rayon-backed batch evaluation with a thread cap from `GIBBS_CONTROL_THREADS`.

use gibbs_control_core::{sample_perturbation, BatchRunner, ControlSequence, EnergyModel, NoiseKernel, RunSeed};
use rayon::prelude::*;

pub const THREADS_ENV: &str = "GIBBS_CONTROL_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum ThreadError {
    #[error("{THREADS_ENV} must be a positive integer (got {0:?})")]
    InvalidCap(String),
    #[error("building the worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Thread cap from the environment, `None` when unset.
pub fn thread_cap() -> Result<Option<usize>, ThreadError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(ThreadError::InvalidCap(v)),
        },
        Err(_) => Ok(None),
    }
}

/// Worker pool; results are always collected in index order.
pub struct Parallel {
    pool: rayon::ThreadPool,
}

impl Parallel {
    pub fn new(threads: Option<usize>) -> Result<Self, ThreadError> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n);
        }
        Ok(Parallel { pool: builder.build()? })
    }

    pub fn from_env() -> Result<Self, ThreadError> {
        Self::new(thread_cap()?)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// `f(0..n)` in parallel, returned in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }
}

impl BatchRunner for Parallel {
    fn perturbations(
        &self,
        kernel: &NoiseKernel,
        horizon: usize,
        samples: usize,
        seed: &RunSeed,
    ) -> gibbs_control_core::Result<Vec<ControlSequence>> {
        if samples == 0 {
            return Err(gibbs_control_core::Error::InvalidParameter {
                name: "samples",
                reason: "must be >= 1".into(),
            });
        }
        self.map(samples, |i| sample_perturbation(kernel, horizon, seed, i as u64))
            .into_iter()
            .collect()
    }

    fn energies<E: EnergyModel + Sync>(
        &self,
        energy: &E,
        base: &ControlSequence,
        perturbations: &[ControlSequence],
    ) -> Vec<f64> {
        self.pool.install(|| {
            perturbations
                .par_iter()
                .map_init(
                    || vec![0.0; base.as_slice().len()],
                    |buf, p| {
                        for ((b, u), e) in buf.iter_mut().zip(base.as_slice()).zip(p.as_slice()) {
                            *b = u + e;
                        }
                        energy.energy(buf)
                    },
                )
                .collect()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gibbs_control_core::envs::{energy_of, Pendulum};
    use gibbs_control_core::mppi::{mppi_update_with, MppiConfig};
    use gibbs_control_core::Serial;

    #[test]
    fn parallel_matches_serial_bit_for_bit() {
        let env = Pendulum::default();
        let energy = energy_of(&env, &env, &[0.0, 0.0], 20).unwrap();
        let kernel = NoiseKernel::isotropic(1, 4.0, 1.0).unwrap();
        let cfg = MppiConfig::new(kernel, 500, 20, 1).unwrap();
        let u = ControlSequence::zeros(20, 1).unwrap();
        let seed = RunSeed::new(12);
        let (a, ba) = mppi_update_with(&Serial, &u, &energy, &cfg, &seed).unwrap();
        for threads in [1, 3, 8] {
            let par = Parallel::new(Some(threads)).unwrap();
            let (b, bb) = mppi_update_with(&par, &u, &energy, &cfg, &seed).unwrap();
            assert_eq!(a, b);
            assert_eq!(ba, bb);
        }
    }

    #[test]
    fn map_keeps_index_order() {
        let par = Parallel::new(Some(4)).unwrap();
        assert_eq!(par.map(100, |i| i * i), (0..100).map(|i| i * i).collect::<Vec<_>>());
    }
}
