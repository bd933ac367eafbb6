//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Tolerances and budgets are pinned here, independent of
//! the defaults in the library.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gibbs_control::config::{ExperimentConfig, Method};
use gibbs_control::parallel::Parallel;
use gibbs_control::run::run_experiment;
use gibbs_control::verify::{
    measure_dsm, measure_free_energy, measure_jensen, measure_mppi_equivalence, measure_pg_identity,
    measure_pg_linear, measure_sampler_moments, measure_score_identity,
};
use gibbs_control_core::diffusion::{Sampler, ScheduleKind};
use gibbs_control_core::RunSeed;

struct Verdict {
    pass: bool,
    detail: String,
}

fn criterion(id: u32, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Result<Verdict, String>) -> bool {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    let in_time = budget.is_none_or(|b| elapsed < b);
    let (pass, detail) = match result {
        Ok(v) => (v.pass && in_time, v.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let budget = budget.map_or(String::new(), |b| format!(", budget {}s", b.as_secs()));
    println!(
        "criterion {id:>2} {:<4} {name}: {detail}; {:.2}s{budget}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
    );
    pass
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn mppi_equivalence() -> Result<Verdict, String> {
    let r = measure_mppi_equivalence(&RunSeed::new(101), 64).map_err(e)?;
    // E = -u²/2, τ = σ² = 1, u = 1: the expected update lands on u/(1+σ²)
    let target = 1.0 / (1.0 + 1.0);
    let last = r.rows.last().ok_or("no rows")?;
    if last.samples != 100_000 {
        return Err(format!("largest N is {}", last.samples));
    }
    let err = last.error + ((1.0 + r.quadrature_step) - target).abs();
    let z = err / last.standard_error;
    let slope_ok = (r.slope + 0.5).abs() <= 0.1;
    Ok(Verdict {
        pass: z < 3.0 && slope_ok,
        detail: format!("|err| = {err:.3e} = {z:.2} SE at N=1e5 (< 3); slope {:.3} (-0.5 ± 0.1)", r.slope),
    })
}

fn jensen() -> Result<Verdict, String> {
    let par = Parallel::new(None).map_err(e)?;
    let r = measure_jensen(&par, &RunSeed::new(202), 100, 100).map_err(e)?;
    Ok(Verdict {
        pass: r.energies == 100 && r.points == 100 && r.min_gap >= -1e-6 && r.max_limit_error < 1e-3,
        detail: format!(
            "min gap {:.3e} (>= -1e-6) over {}x{}; max |Ẽ-E| at σ=1e-3 {:.3e} (< 1e-3)",
            r.min_gap, r.energies, r.points, r.max_limit_error
        ),
    })
}

fn free_energy() -> Result<Verdict, String> {
    let r = measure_free_energy(&RunSeed::new(303), 100).map_err(e)?;
    Ok(Verdict {
        pass: r.optimum_gap < 1e-6 && r.max_competitor_margin < 0.0 && r.competitors == 100,
        detail: format!(
            "|G(p*) - τ log Z| = {:.3e} (< 1e-6); max G(q) - G(p*) = {:.3e} (< 0) over {} q",
            r.optimum_gap, r.max_competitor_margin, r.competitors
        ),
    })
}

fn pg_identity() -> Result<Verdict, String> {
    let r = measure_pg_identity(&RunSeed::new(404)).map_err(e)?;
    Ok(Verdict {
        pass: r.residual <= 1e-10 && r.negative_control_residual > 1e-10,
        detail: format!(
            "relative residual {:.3e} (<= 1e-10); vanilla control {:.3e} (> 1e-10)",
            r.residual, r.negative_control_residual
        ),
    })
}

fn pg_linear() -> Result<Verdict, String> {
    let r = measure_pg_linear(&RunSeed::new(505), 100_000).map_err(e)?;
    Ok(Verdict {
        pass: r.max_z < 3.0,
        detail: format!("max |ĝ - g| / SE = {:.3} (< 3) over {} coordinates", r.max_z, r.gradient.len()),
    })
}

fn samplers() -> Result<Verdict, String> {
    let par = Parallel::new(None).map_err(e)?;
    let moments = measure_sampler_moments(&par, &RunSeed::new(606), 1000, 20_000).map_err(e)?;
    // two-point mixture {-1, +1} with bandwidth 0.05
    let target = 1.0 + 0.05 * 0.05;
    let mut pass = moments.len() == 4;
    let kinds = [ScheduleKind::Ve, ScheduleKind::Vp];
    let samplers = [Sampler::Ancestral, Sampler::ReverseDiffusion];
    pass &= kinds.iter().all(|k| samplers.iter().all(|s| moments.iter().any(|m| m.kind == *k && m.sampler == *s)));
    let mut worst_mean = 0.0f64;
    let mut worst_second = 0.0f64;
    let mut worst_pair = 0.0f64;
    for m in &moments {
        worst_mean = worst_mean.max(m.mean.abs() / m.mean_se);
        worst_second = worst_second.max((m.second_moment / target - 1.0).abs());
    }
    for (i, a) in moments.iter().enumerate() {
        for b in &moments[i + 1..] {
            worst_pair = worst_pair
                .max((a.mean - b.mean).abs() / a.mean_se.hypot(b.mean_se))
                .max((a.second_moment - b.second_moment).abs() / a.second_moment_se.hypot(b.second_moment_se));
        }
    }
    pass &= worst_mean <= 3.0 && worst_second <= 0.05 && worst_pair <= 2.0;
    Ok(Verdict {
        pass,
        detail: format!(
            "worst |mean|/SE {worst_mean:.2} (<= 3); worst second-moment error {:.3}% (<= 5%); worst pairwise gap {worst_pair:.2} SE (<= 2)",
            100.0 * worst_second
        ),
    })
}

fn score() -> Result<Verdict, String> {
    let r = measure_score_identity(&RunSeed::new(707), 10, 100).map_err(e)?;
    Ok(Verdict {
        pass: r.identity_points == 10 && r.fd_points == 100 && r.max_identity_error <= 1e-6 && r.max_fd_error <= 1e-4,
        detail: format!(
            "analytic vs smoothed {:.3e} (<= 1e-6, 10 points); vs finite differences {:.3e} (<= 1e-4, 100 points)",
            r.max_identity_error, r.max_fd_error
        ),
    })
}

fn dsm() -> Result<Verdict, String> {
    let cases = measure_dsm(&RunSeed::new(808), 100_000).map_err(e)?;
    let mut pass = !cases.is_empty();
    let mut parts = Vec::new();
    for c in &cases {
        let rel = (c.zero_score_loss / c.zero_score_expected - 1.0).abs();
        pass &= c.analytic_loss < c.offset_loss && rel < 0.02;
        parts.push(format!(
            "{:?} i={}: {:.4} < {:.4}, zero-score off d/σ² by {:.2}%",
            c.kind,
            c.step,
            c.analytic_loss,
            c.offset_loss,
            100.0 * rel
        ));
    }
    Ok(Verdict {
        pass,
        detail: parts.join("; "),
    })
}

fn read_json(path: &Path) -> Result<serde_json::Value, String> {
    serde_json::from_str(&fs::read_to_string(path).map_err(e)?).map_err(e)
}

fn planner(root: &Path) -> Result<Verdict, String> {
    let mut cfg = ExperimentConfig::from_json("{}", Some(Method::Plan)).map_err(e)?;
    cfg.output_dir = root.to_path_buf();
    cfg.seed = 0;
    let p = &mut cfg.planning;
    p.episodes = 50;
    p.demonstrations.count = 200;
    p.episode.goal_radius = 0.1;
    let par = Parallel::new(None).map_err(e)?;
    let outcome = run_experiment(&cfg, &par).map_err(e)?;
    let summary = read_json(&outcome.dir.join("summary.json"))?;
    let results = &summary["results"];
    let successes = results["successes"].as_u64().ok_or("missing successes")?;
    let episodes = results["episodes"].as_u64().ok_or("missing episodes")?;
    let penetrations = results["penetrating_steps"].as_u64().ok_or("missing penetrations")?;
    let identity = results["max_shift_identity_error"].as_f64().ok_or("missing identity")?;
    let rate = successes as f64 / episodes as f64;
    Ok(Verdict {
        pass: episodes == 50 && rate >= 0.9 && penetrations == 0 && identity <= 1e-12,
        detail: format!(
            "{successes}/{episodes} episodes succeed (>= 90%), {penetrations} penetrating steps (0); shift identity {identity:.3e} (<= 1e-12)"
        ),
    })
}

/// Small configs covering every method.
fn reproducibility_configs() -> Vec<String> {
    vec![
        r#"{"method": "mppi", "control": {"samples": 256, "horizon": 20, "steps": 15}}"#.into(),
        r#"{"method": "mppi-regularized", "environment": {"name": "double_integrator", "params": {}}, "control": {"noise_variance": [1.0], "samples": 200, "horizon": 10, "steps": 10, "iterations": 2}}"#.into(),
        r#"{"method": "pg", "policy_gradient": {"iterations": 10}, "control": {"horizon": 20}}"#.into(),
        r#"{"method": "pg-exp", "policy_gradient": {"iterations": 10}, "control": {"horizon": 20}}"#.into(),
        r#"{"method": "diffuse", "diffusion": {"paths": 500, "schedule": {"kind": "vp", "beta_min": 0.0001, "beta_max": 0.02, "steps": 200}}}"#.into(),
        r#"{"method": "plan", "planning": {"episodes": 4, "episode": {"max_steps": 20}}}"#.into(),
        r#"{"method": "verify", "verify": {"checks": ["smoothed-closed-form", "pg-identity", "free-energy"]}}"#.into(),
    ]
}

fn reproducibility(root: &Path) -> Result<Verdict, String> {
    let mut checked = 0;
    for (k, text) in reproducibility_configs().iter().enumerate() {
        let mut cfg = ExperimentConfig::from_json(text, None).map_err(e)?;
        cfg.seed = 11 + k as u64;
        cfg.output_dir = root.join(format!("first-{k}"));
        let first = run_experiment(&cfg, &Parallel::new(Some(1)).map_err(e)?).map_err(e)?;
        let resolved = ExperimentConfig::load(&first.dir.join("config.resolved.json"), None).map_err(e)?;
        let mut again = resolved.clone();
        again.output_dir = root.join(format!("second-{k}"));
        let second = run_experiment(&again, &Parallel::new(Some(3)).map_err(e)?).map_err(e)?;
        let a = fs::read(first.dir.join("metrics.csv")).map_err(e)?;
        let b = fs::read(second.dir.join("metrics.csv")).map_err(e)?;
        if a.is_empty() || a != b {
            return Ok(Verdict {
                pass: false,
                detail: format!("metrics.csv differs for method {}", resolved.method()),
            });
        }
        checked += 1;
    }
    Ok(Verdict {
        pass: checked == reproducibility_configs().len(),
        detail: format!("{checked} methods rerun from config.resolved.json with 1 vs 3 threads, metrics.csv byte-identical"),
    })
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let results = [
        criterion(1, "MPPI step vs smoothed gradient", secs(10), mppi_equivalence),
        criterion(2, "Jensen bound and smoothing limit", secs(60), jensen),
        criterion(3, "Gibbs free energy optimality", secs(5), free_energy),
        criterion(4, "PG to MPPI reduction", secs(5), pg_identity),
        criterion(5, "vanilla PG on a linear return", secs(10), pg_linear),
        criterion(6, "diffusion sampler moments", secs(120), samplers),
        criterion(7, "score identity", secs(10), score),
        criterion(8, "denoising score matching", secs(30), dsm),
        criterion(9, "guided planning end to end", secs(300), || planner(&tmp.path().join("plan"))),
        criterion(10, "reproducibility from resolved config", None, || {
            reproducibility(&tmp.path().join("repro"))
        }),
    ];
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
