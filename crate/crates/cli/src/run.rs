//! One experiment per run directory.
//!
//! A run directory `<method>-<utcstamp>-<seed>` holds `config.resolved.json`,
//! `metrics.csv`, `summary.json` and any SVG plots. `metrics.csv` depends
//! only on the resolved config; wall time and thread count go to the summary.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use gibbs_control_core::diffusion::KdeDataModel;
use gibbs_control_core::envs::{energy_of, Dynamics, Environment, PointMassNav};
use gibbs_control_core::mppi::{mppi_control_loop_with, IterationStats, MppiConfig};
use gibbs_control_core::planner::{
    demonstration_path, navigation_demonstrations, run_episode, EpisodeLog, GuidanceConfig, NavigationGuidance,
    TrajectoryLayout,
};
use gibbs_control_core::policygrad::{check_pg_mppi_identity, pg_estimate_from, GaussianOpenLoopPolicy};
use gibbs_control_core::{BatchRunner, ControlSequence, EnergyModel, PerturbationBatch, RunSeed};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Method};
use crate::parallel::Parallel;
use crate::plot::{self, Axes, Overlay, Scale, Series};
use crate::verify::{self, Bound, Row};

/// Where a finished run left its artifacts and whether its checks passed.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub passed: bool,
    pub rows: Vec<Row>,
}

/// Results of a method before they are written to disk.
#[derive(Default)]
struct MethodOutput {
    /// header + records of `metrics.csv`
    header: Vec<String>,
    records: Vec<Vec<String>>,
    /// declared checks; a run passes iff all of them pass
    rows: Vec<Row>,
    results: serde_json::Map<String, Value>,
    plots: Vec<(&'static str, String)>,
    extra_csv: Vec<Table>,
}

/// file name, header and records of an auxiliary CSV
type Table = (&'static str, Vec<String>, Vec<Vec<String>>);

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

/// Create a fresh run directory under `root`, adding `-1`, `-2`, ... when
/// the name is taken.
pub fn create_run_dir(root: &Path, method: Method, seed: u64) -> io::Result<PathBuf> {
    fs::create_dir_all(root)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("{}-{stamp}-{seed}", method.name());
    for k in 0.. {
        let name = if k == 0 { base.clone() } else { format!("{base}-{k}") };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!("unbounded suffix search")
}

fn write_csv(path: &Path, header: &[String], records: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for r in records {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Run `cfg` into a new directory under `cfg.output_dir`.
///
/// Errors after the directory exists are recorded in `summary.json` before
/// being returned.
pub fn run_experiment(cfg: &ExperimentConfig, par: &Parallel) -> Result<RunOutcome> {
    let method = cfg.method();
    let dir = create_run_dir(&cfg.output_dir, method, cfg.seed)
        .with_context(|| format!("creating run directory under {}", cfg.output_dir.display()))?;
    fs::write(dir.join("config.resolved.json"), serde_json::to_string_pretty(cfg)? + "\n")?;
    log::info!("{method} run in {} with {} threads", dir.display(), par.threads());
    let start = Instant::now();
    let result = execute(cfg, par).and_then(|out| persist(&dir, &out).map(|()| out));
    let wall = start.elapsed().as_secs_f64();
    let mut summary = json!({
        "method": method.name(),
        "seed": cfg.seed,
        "threads": par.threads(),
        "wall_time_seconds": wall,
    });
    let outcome = match result {
        Ok(out) => {
            let passed = out.rows.iter().all(|r| r.pass);
            summary["status"] = json!(if passed { "pass" } else { "fail" });
            summary["checks"] = serde_json::to_value(&out.rows)?;
            summary["results"] = Value::Object(out.results);
            Ok(RunOutcome {
                dir: dir.clone(),
                passed,
                rows: out.rows,
            })
        }
        Err(e) => {
            summary["status"] = json!("error");
            summary["error"] = json!(format!("{e:#}"));
            Err(e)
        }
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    outcome
}

fn persist(dir: &Path, out: &MethodOutput) -> Result<()> {
    write_csv(&dir.join("metrics.csv"), &out.header, &out.records)?;
    for (name, header, records) in &out.extra_csv {
        write_csv(&dir.join(name), header, records)?;
    }
    for (name, svg) in &out.plots {
        plot::write_svg(&dir.join(name), svg)?;
    }
    Ok(())
}

fn execute(cfg: &ExperimentConfig, par: &Parallel) -> Result<MethodOutput> {
    let seed = RunSeed::new(cfg.seed);
    match cfg.method() {
        Method::Mppi | Method::MppiRegularized => run_mppi(cfg, par, &seed),
        Method::Pg | Method::PgExp => run_pg(cfg, par, &seed),
        Method::Diffuse => run_diffuse(cfg, par, &seed),
        Method::Plan => run_plan(cfg, par, &seed),
        Method::Verify => run_verify(cfg, par, &seed),
    }
}

fn run_mppi(cfg: &ExperimentConfig, par: &Parallel, seed: &RunSeed) -> Result<MethodOutput> {
    let env = cfg.environment();
    let c = &cfg.control;
    let mut mppi = MppiConfig::new(cfg.kernel()?, c.samples, c.horizon, c.iterations)?;
    if cfg.method() == Method::MppiRegularized {
        mppi = mppi.regularized(cfg.nominal()?)?;
    }
    let x0 = cfg.initial_state();
    let log = mppi_control_loop_with(par, env, env, &x0, &mppi, c.steps, seed)?;

    let (n, m) = (env.state_dim(), env.control_dim());
    let mut out = MethodOutput::default();
    let mut cols = vec!["step", "iteration", "effective_sample_size", "max_weight", "best_energy", "step_cost"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    cols.extend((0..n).map(|k| format!("state_{k}")));
    cols.extend((0..m).map(|k| format!("control_{k}")));
    out.header = cols;
    for IterationStats {
        step,
        iteration,
        effective_sample_size,
        max_weight,
        best_energy,
    } in &log.iterations
    {
        let mut r = vec![
            step.to_string(),
            iteration.to_string(),
            num(*effective_sample_size),
            num(*max_weight),
            num(*best_energy),
            num(log.step_costs[*step]),
        ];
        r.extend(log.executed_states[*step].iter().map(|v| num(*v)));
        r.extend(log.executed_controls[*step].iter().map(|v| num(*v)));
        out.records.push(r);
    }

    let total: f64 = log.step_costs.iter().sum();
    let final_state = log.final_state().to_vec();
    out.results.insert("environment".into(), json!(env.name()));
    out.results.insert("total_cost".into(), json!(total));
    out.results.insert("final_state".into(), json!(final_state));
    if let Environment::Pendulum(_) = env {
        let err = gibbs_control_core::envs::Pendulum::upright_error(final_state[0]);
        out.results.insert("final_upright_error".into(), json!(err));
    }
    let costs = Series::new(
        "running cost",
        log.step_costs.iter().enumerate().map(|(t, c)| (t as f64, *c)).collect(),
    );
    out.plots.push((
        "cost.svg",
        plot::line_plot(
            &Axes {
                title: format!("{} on {}", cfg.method(), env.name()),
                x_label: "step".into(),
                y_label: "running cost".into(),
                ..Axes::default()
            },
            &[costs],
        )?,
    ));
    let states: Vec<Series> = (0..n)
        .map(|k| {
            Series::new(
                format!("state_{k}"),
                log.executed_states.iter().enumerate().map(|(t, x)| (t as f64, x[k])).collect(),
            )
        })
        .collect();
    out.plots.push((
        "states.svg",
        plot::line_plot(
            &Axes {
                title: "executed states".into(),
                x_label: "step".into(),
                y_label: "value".into(),
                ..Axes::default()
            },
            &states,
        )?,
    ));
    Ok(out)
}

/// Open-loop policy optimization over one horizon from the initial state.
///
/// `pg` ascends with `μ += η Σ ĝ`; `pg-exp` takes the normalized exp step
/// `μ += Σ ĝ_exp · N / Σ exp(R_i/τ)`, which is the MPPI update on the batch.
fn run_pg(cfg: &ExperimentConfig, par: &Parallel, seed: &RunSeed) -> Result<MethodOutput> {
    let env = cfg.environment();
    let c = &cfg.control;
    let p = &cfg.policy_gradient;
    let tau = c.temperature;
    let x0 = cfg.initial_state();
    let energy = energy_of(env, env, &x0, c.horizon)?;
    let kernel = cfg.kernel()?;
    let mut policy = GaussianOpenLoopPolicy::new(
        ControlSequence::zeros(c.horizon, env.control_dim())?,
        kernel.covariance().clone(),
    )?;
    let exp = cfg.method() == Method::PgExp;
    let mut out = MethodOutput {
        header: header(&[
            "iteration",
            "energy_at_mean",
            "batch_mean_energy",
            "best_energy",
            "effective_sample_size",
            "step_norm",
            "identity_residual",
        ]),
        ..MethodOutput::default()
    };
    let mut worst_residual = 0.0f64;
    let mut best = f64::NEG_INFINITY;
    for it in 0..p.iterations {
        let iter_seed = seed.substream(it as u64);
        let eps = par.perturbations(&kernel, c.horizon, p.samples, &iter_seed)?;
        let returns = par.energies(&energy, policy.means(), &eps);
        let at_mean = energy.energy(policy.means().as_slice());
        let batch_mean = returns.iter().sum::<f64>() / returns.len() as f64;
        let batch = PerturbationBatch::from_energies(eps, returns, tau)?;
        best = best.max(batch.best_energy()).max(at_mean);
        let (step, residual) = if exp {
            let report = check_pg_mppi_identity(&policy, &batch)?;
            worst_residual = worst_residual.max(report.residual);
            (report.reconstructed, report.residual)
        } else {
            let g = pg_estimate_from(&policy, batch.perturbations(), batch.energies())?;
            let mut step = kernel.apply_sequence(g.as_slice())?;
            step.iter_mut().for_each(|v| *v *= p.learning_rate);
            (step, f64::NAN)
        };
        let norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
        out.records.push(vec![
            it.to_string(),
            num(at_mean),
            num(batch_mean),
            num(batch.best_energy()),
            num(batch.effective_sample_size()),
            num(norm),
            if exp { num(residual) } else { String::new() },
        ]);
        let next = policy.means().add_scaled(1.0, &step)?;
        if next.as_slice().iter().any(|v| !v.is_finite()) {
            anyhow::bail!("policy means diverged at iteration {it}");
        }
        policy.set_means(next)?;
    }
    let final_energy = energy.energy(policy.means().as_slice());
    out.results.insert("environment".into(), json!(env.name()));
    out.results.insert("final_energy_at_mean".into(), json!(final_energy));
    out.results.insert("best_energy".into(), json!(best.max(final_energy)));
    out.results.insert("final_means".into(), json!(policy.means().as_slice()));
    if exp {
        out.rows.push(Row::new(
            crate::config::Check::PgIdentity,
            "max exp-pg reconstruction residual",
            format!("iterations={}", p.iterations),
            worst_residual,
            Bound::AtMost,
            verify::PG_IDENTITY_TOL,
        ));
    }
    let series = Series::new(
        "energy at mean",
        out.records
            .iter()
            .map(|r| (r[0].parse().unwrap_or(0.0), r[1].parse().unwrap_or(f64::NAN)))
            .collect(),
    );
    out.plots.push((
        "energy.svg",
        plot::line_plot(
            &Axes {
                title: format!("{} on {}", cfg.method(), env.name()),
                x_label: "iteration".into(),
                y_label: "E(mean controls)".into(),
                ..Axes::default()
            },
            &[series],
        )?,
    ));
    Ok(out)
}

fn run_diffuse(cfg: &ExperimentConfig, par: &Parallel, seed: &RunSeed) -> Result<MethodOutput> {
    let d = &cfg.diffusion;
    let schedule = d.schedule.build()?;
    let data = KdeDataModel::from_scalars(&d.data, d.bandwidth)?;
    let (xs, m) = verify::sample_moments(par, &data, &schedule, d.sampler, d.paths, seed);

    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi - lo) / d.bins as f64;
    let mut counts = vec![0usize; d.bins];
    for x in &xs {
        counts[(((x - lo) / width) as usize).min(d.bins - 1)] += 1;
    }
    let smooth = d.bandwidth > 0.0;
    let mut out = MethodOutput {
        header: header(&["bin_left", "bin_right", "count", "empirical_density", "target_density"]),
        ..MethodOutput::default()
    };
    for (k, c) in counts.iter().enumerate() {
        let (a, b) = (lo + k as f64 * width, lo + (k + 1) as f64 * width);
        let target = if smooth {
            num(data.log_density(&[0.5 * (a + b)]).exp())
        } else {
            String::new()
        };
        out.records.push(vec![
            num(a),
            num(b),
            c.to_string(),
            num(*c as f64 / (xs.len() as f64 * width)),
            target,
        ]);
    }
    out.extra_csv.push((
        "samples.csv",
        header(&["path", "x"]),
        xs.iter().enumerate().map(|(i, x)| vec![i.to_string(), num(*x)]).collect(),
    ));
    out.results.insert("moments".into(), serde_json::to_value(&m)?);
    out.rows.push(Row::new(
        crate::config::Check::SamplerMoments,
        "|mean - data mean| in standard errors",
        m.label(),
        (m.mean - d.data.iter().sum::<f64>() / d.data.len() as f64).abs() / m.mean_se,
        Bound::AtMost,
        verify::SAMPLER_MEAN_SE_MULTIPLE,
    ));
    out.rows.push(Row::new(
        crate::config::Check::SamplerMoments,
        "second moment relative error",
        m.label(),
        (m.second_moment / m.target_second_moment - 1.0).abs(),
        Bound::AtMost,
        verify::SAMPLER_SECOND_MOMENT_REL,
    ));
    let density = smooth.then(|| {
        let n = 400;
        Series::new(
            "target density",
            (0..=n)
                .map(|k| {
                    let x = lo + (hi - lo) * k as f64 / n as f64;
                    (x, data.log_density(&[x]).exp())
                })
                .collect(),
        )
    });
    out.plots.push((
        "histogram.svg",
        plot::histogram(
            &Axes {
                title: format!("{} samples", m.label()),
                x_label: "x".into(),
                y_label: "density".into(),
                ..Axes::default()
            },
            &xs,
            d.bins,
            density.as_ref(),
        )?,
    ));
    Ok(out)
}

fn positions(layout: &TrajectoryLayout, values: &[f64]) -> Vec<(f64, f64)> {
    (0..layout.horizon)
        .map(|t| {
            let s = layout.state(values, t);
            (s[0], s[1])
        })
        .collect()
}

fn executed_path(log: &EpisodeLog) -> Vec<(f64, f64)> {
    log.states.chunks_exact(log.state_dim).map(|s| (s[0], s[1])).collect()
}

fn run_plan(cfg: &ExperimentConfig, par: &Parallel, seed: &RunSeed) -> Result<MethodOutput> {
    let p = &cfg.planning;
    let env: &PointMassNav = cfg.planning_env().context("planning needs the point_mass_nav environment")?;
    let demo = &p.demonstrations;
    let prior = navigation_demonstrations(env, demo)?;
    let schedule = p.schedule.build()?;
    let layout = TrajectoryLayout::new(2, 2, demo.horizon)?;
    let energy = NavigationGuidance::new(env.clone(), demo.horizon, &p.guidance)?;
    let mut guidance = GuidanceConfig::new(p.alpha, energy, p.sampler)?;
    guidance.covariance = p.covariance;
    guidance.fd_step = p.fd_step;
    guidance.validate()?;

    let logs = par
        .map(p.episodes, |e| {
            run_episode(env, &prior, &schedule, layout, &guidance, &p.episode, seed, e)
        })
        .into_iter()
        .collect::<gibbs_control_core::Result<Vec<_>>>()?;
    let identity = verify::measure_guided_shift_identity(
        layout,
        &prior,
        &schedule,
        &guidance,
        &p.episode.initial_state,
        &seed.substream(u64::MAX),
    )?;

    let mut out = MethodOutput {
        header: header(&[
            "episode",
            "steps",
            "reached_goal",
            "collisions",
            "success",
            "total_cost",
            "final_goal_distance",
        ]),
        ..MethodOutput::default()
    };
    let mut traj = Vec::new();
    for l in &logs {
        out.records.push(vec![
            l.episode.to_string(),
            l.steps().to_string(),
            l.reached_goal.to_string(),
            l.collisions.to_string(),
            l.success().to_string(),
            num(l.total_cost()),
            num(l.final_goal_distance()),
        ]);
        for (t, s) in l.states.chunks_exact(l.state_dim).enumerate() {
            let a = l.actions.get(2 * t..2 * t + 2);
            traj.push(vec![
                l.episode.to_string(),
                t.to_string(),
                num(s[0]),
                num(s[1]),
                a.map_or(String::new(), |a| num(a[0])),
                a.map_or(String::new(), |a| num(a[1])),
            ]);
        }
    }
    out.extra_csv.push(("trajectories.csv", header(&["episode", "t", "x", "y", "action_x", "action_y"]), traj));

    let successes = logs.iter().filter(|l| l.success()).count();
    let reached = logs.iter().filter(|l| l.reached_goal).count();
    let collisions: usize = logs.iter().map(|l| l.collisions).sum();
    let rate = successes as f64 / logs.len() as f64;
    out.results.insert("episodes".into(), json!(logs.len()));
    out.results.insert("successes".into(), json!(successes));
    out.results.insert("reached_goal".into(), json!(reached));
    out.results.insert("success_rate".into(), json!(rate));
    out.results.insert("penetrating_steps".into(), json!(collisions));
    out.results.insert("max_shift_identity_error".into(), json!(identity));
    let episodes = format!("episodes={}", logs.len());
    out.rows.push(Row::named("plan", "success rate", &episodes, rate, Bound::AtLeast, p.required_success_rate));
    out.rows.push(Row::named("plan", "penetrating steps", &episodes, collisions as f64, Bound::AtMost, 0.0));
    out.rows.push(Row::named(
        "plan",
        "guided shift identity",
        format!("steps={}", schedule.steps()),
        identity,
        Bound::AtMost,
        verify::SHIFT_IDENTITY_TOL,
    ));

    let demo_seed = RunSeed::new(demo.seed);
    let demonstrations = (0..demo.count)
        .map(|k| {
            demonstration_path(env, demo, &mut demo_seed.rng(k as u64))
                .into_iter()
                .map(|q| (q[0], q[1]))
                .collect()
        })
        .collect();
    let scene = Overlay {
        title: format!("{successes}/{} episodes reach the goal without penetration", logs.len()),
        obstacle_center: env.obstacle_center,
        obstacle_radius: env.obstacle_radius,
        goal: env.goal,
        goal_radius: p.episode.goal_radius,
        demonstrations,
        plan: logs.first().map_or(Vec::new(), |l| positions(&layout, &l.first_plan)),
        executed: logs.iter().map(executed_path).collect(),
    };
    out.plots.push(("overlay.svg", plot::trajectory_overlay(&scene)?));
    Ok(out)
}

fn run_verify(cfg: &ExperimentConfig, par: &Parallel, seed: &RunSeed) -> Result<MethodOutput> {
    let mut out = MethodOutput {
        header: header(&["check", "claim", "parameter", "measured", "bound", "tolerance", "pass"]),
        ..MethodOutput::default()
    };
    for &check in &cfg.verify.checks {
        log::info!("verify: {}", check.name());
        let result = verify::run_check(check, par, seed).with_context(|| format!("check {}", check.name()))?;
        if let Some(points) = result.convergence {
            let reference = Series::new(
                "N^-1/2 reference",
                points.iter().map(|(n, _)| (*n, points[0].1 * (points[0].0 / n).sqrt())).collect(),
            );
            out.plots.push((
                "convergence.svg",
                plot::line_plot(
                    &Axes {
                        title: "MPPI step vs smoothed-gradient step".into(),
                        x_label: "samples N".into(),
                        y_label: "rms error".into(),
                        x_scale: Scale::Log,
                        y_scale: Scale::Log,
                    },
                    &[Series::new("measured", points.clone()), reference],
                )?,
            ));
        }
        out.rows.extend(result.rows);
    }
    for r in &out.rows {
        out.records.push(vec![
            r.check.clone(),
            r.claim.clone(),
            r.parameter.clone(),
            num(r.measured),
            r.bound.symbol().to_string(),
            num(r.tolerance),
            r.pass.to_string(),
        ]);
    }
    let passed = out.rows.iter().filter(|r| r.pass).count();
    out.results.insert("rows".into(), json!(out.rows.len()));
    out.results.insert("passed".into(), json!(passed));
    Ok(out)
}
