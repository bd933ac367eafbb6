use gibbs_control_core::diffusion::{analytic_score, log_marginal, KdeDataModel, NoiseSchedule, Sampler};
use gibbs_control_core::envs::{rollout, DoubleIntegrator, Dynamics, Pendulum, PointMassNav};
use gibbs_control_core::mppi::{mppi_update, mppi_update_regularized, MppiConfig};
use gibbs_control_core::planner::{guided_reverse_step, GuidanceConfig, TrajectoryLayout, TrajectoryPlan};
use gibbs_control_core::{
    log_sum_exp, sample_perturbation, sample_perturbations, softmax_weights, ControlSequence, FnEnergy, NoiseKernel,
    RunSeed,
};
use proptest::prelude::*;

fn finite_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn softmax_shift_invariant(e in finite_vec(1..20), c in -500.0f64..500.0, tau in 0.05f64..10.0) {
        let w = softmax_weights(&e, tau).unwrap();
        let shifted: Vec<f64> = e.iter().map(|v| v + c).collect();
        let ws = softmax_weights(&shifted, tau).unwrap();
        for (a, b) in w.iter().zip(&ws) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn softmax_scale_covariant(e in finite_vec(1..20), c in 0.1f64..10.0, tau in 0.1f64..10.0) {
        let w = softmax_weights(&e, tau).unwrap();
        let scaled: Vec<f64> = e.iter().map(|v| v * c).collect();
        let ws = softmax_weights(&scaled, tau * c).unwrap();
        for (a, b) in w.iter().zip(&ws) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn log_sum_exp_bounds(v in prop::collection::vec(-700.0f64..700.0, 1..50)) {
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let l = log_sum_exp(&v).unwrap();
        prop_assert!(l >= m);
        prop_assert!(l <= m + (v.len() as f64).ln());
    }

    #[test]
    fn perturbations_independent_of_batch_size(seed in any::<u64>(), n in 1usize..40, extra in 1usize..40) {
        let k = NoiseKernel::isotropic(2, 0.7, 1.0).unwrap();
        let small = sample_perturbations(&k, 3, n, &RunSeed::new(seed)).unwrap();
        let big = sample_perturbations(&k, 3, n + extra, &RunSeed::new(seed)).unwrap();
        prop_assert_eq!(&small[..], &big[..n]);
        let single = sample_perturbation(&k, 3, &RunSeed::new(seed), (n - 1) as u64).unwrap();
        prop_assert_eq!(&single, &small[n - 1]);
    }

    #[test]
    fn rollout_reconstructs_states(u in prop::collection::vec(-5.0f64..5.0, 1..30), x0 in prop::array::uniform2(-3.0f64..3.0)) {
        let env = Pendulum::default();
        let controls = ControlSequence::from_scalars(&u).unwrap();
        let traj = rollout(&env, &env, &x0, &controls).unwrap();
        let mut next = [0.0; 2];
        for t in 0..traj.horizon() {
            env.step(traj.state(t), controls.step(t), &mut next);
            prop_assert_eq!(&next[..], traj.state(t + 1));
        }
    }

    #[test]
    fn cost_is_additive(u in prop::collection::vec(-2.0f64..2.0, 2..30), split in 1usize..29) {
        use gibbs_control_core::envs::Cost;
        let env = DoubleIntegrator::default();
        let split = split.min(u.len() - 1);
        let full = rollout(&env, &env, &[1.0, 0.0], &ControlSequence::from_scalars(&u).unwrap()).unwrap();
        let head = rollout(&env, &env, &[1.0, 0.0], &ControlSequence::from_scalars(&u[..split]).unwrap()).unwrap();
        let tail = rollout(&env, &env, head.final_state(), &ControlSequence::from_scalars(&u[split..]).unwrap()).unwrap();
        let joined = head.total_cost - env.terminal(head.final_state()) + tail.total_cost;
        prop_assert!((joined - full.total_cost).abs() < 1e-10 * full.total_cost.abs().max(1.0));
    }

    #[test]
    fn regularized_with_nominal_equal_to_u_is_vanilla(u in prop::collection::vec(-2.0f64..2.0, 1..6), seed in any::<u64>()) {
        let k = NoiseKernel::isotropic(1, 0.5, 1.0).unwrap();
        let controls = ControlSequence::from_scalars(&u).unwrap();
        let energy = FnEnergy::new(u.len(), |x: &[f64]| -x.iter().map(|v| (v - 0.3).powi(2)).sum::<f64>());
        let cfg = MppiConfig::new(k.clone(), 32, u.len(), 1).unwrap();
        let reg = cfg.clone().regularized(Some(controls.clone())).unwrap();
        let (a, _) = mppi_update(&controls, &energy, &cfg, &RunSeed::new(seed)).unwrap();
        let (b, _) = mppi_update_regularized(&controls, &energy, &reg, &RunSeed::new(seed)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn mppi_ignores_energy_offset(c in -1e3f64..1e3, seed in any::<u64>()) {
        let k = NoiseKernel::isotropic(1, 1.0, 1.0).unwrap();
        let u = ControlSequence::from_scalars(&[0.4, -0.2]).unwrap();
        let cfg = MppiConfig::new(k, 64, 2, 1).unwrap();
        let e1 = FnEnergy::new(2, |x: &[f64]| -x[0] * x[0] - (x[1] - 1.0).powi(2));
        let e2 = FnEnergy::new(2, move |x: &[f64]| c - x[0] * x[0] - (x[1] - 1.0).powi(2));
        let (a, _) = mppi_update(&u, &e1, &cfg, &RunSeed::new(seed)).unwrap();
        let (b, _) = mppi_update(&u, &e2, &cfg, &RunSeed::new(seed)).unwrap();
        for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn guided_step_clamps_bit_exactly(values in prop::collection::vec(-3.0f64..3.0, 8), s in prop::array::uniform2(-2.0f64..2.0), z in prop::collection::vec(-3.0f64..3.0, 8), alpha in 0.0f64..50.0) {
        let layout = TrajectoryLayout::new(2, 2, 2).unwrap();
        let prior = KdeDataModel::new(8, (0..16).map(|k| (k as f64 * 0.37).sin()).collect(), 0.1).unwrap();
        let schedule = NoiseSchedule::vp_linear(1e-3, 0.2, 10).unwrap();
        let env = PointMassNav::default();
        let energy = FnEnergy::new(8, move |x: &[f64]| -env.goal_distance(&x[4..6]));
        let guidance = GuidanceConfig::new(alpha, energy, Sampler::Ancestral).unwrap();
        let plan = TrajectoryPlan::new(layout, values, 7).unwrap();
        let step = guided_reverse_step(&plan, &prior, &schedule, &guidance, &s, &z).unwrap();
        prop_assert_eq!(step.plan.initial_state(), &s[..]);
        let mut again = step.plan.clone();
        again.clamp(&s);
        prop_assert_eq!(again, step.plan);
    }

    #[test]
    fn score_matches_log_marginal_differences(x in -3.0f64..3.0, i in 1usize..100, h in 0.0f64..0.3) {
        let data = KdeDataModel::from_scalars(&[-1.0, 0.5, 1.0], h).unwrap();
        let vp = NoiseSchedule::vp_linear(1e-4, 0.02, 100).unwrap();
        let ve = NoiseSchedule::ve_geometric(0.01, 10.0, 100).unwrap();
        for sched in [&vp, &ve] {
            let (_, v) = sched.kernel_coefficients(i);
            if v + h * h < 1e-4 {
                continue;
            }
            let s = analytic_score(&data, sched, i, &[x]).unwrap()[0];
            let d = 1e-5 * (v + h * h).sqrt();
            let fd = (log_marginal(&data, sched, i, &[x + d]).unwrap() - log_marginal(&data, sched, i, &[x - d]).unwrap()) / (2.0 * d);
            prop_assert!((s - fd).abs() <= 1e-4 * s.abs().max(1.0), "s {} fd {}", s, fd);
        }
    }
}
