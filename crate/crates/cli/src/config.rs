//! JSON experiment configuration.
//!
//! Every section has defaults, so a config only needs the fields it changes.
//! Unknown keys are rejected. Validation errors carry the field path and,
//! when the key appears in the source text, its line and column.

use std::fmt;
use std::path::{Path, PathBuf};

use gibbs_control_core::diffusion::{NoiseSchedule, Sampler};
use gibbs_control_core::envs::{Dynamics, Environment, Pendulum, PointMassNav};
use gibbs_control_core::planner::{DemoSettings, EpisodeSettings, NavigationGuidanceSettings};
use gibbs_control_core::{ControlSequence, Covariance, NoiseKernel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mppi,
    MppiRegularized,
    Pg,
    PgExp,
    Diffuse,
    Plan,
    Verify,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mppi => "mppi",
            Method::MppiRegularized => "mppi-regularized",
            Method::Pg => "pg",
            Method::PgExp => "pg-exp",
            Method::Diffuse => "diffuse",
            Method::Plan => "plan",
            Method::Verify => "verify",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Filled from the subcommand when absent.
    pub method: Option<Method>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Defaults to the pendulum for control methods and to the navigation
    /// task for planning.
    pub environment: Option<Environment>,
    pub control: ControlSettings,
    pub policy_gradient: PolicyGradientSettings,
    pub diffusion: DiffusionSettings,
    pub planning: PlanningSettings,
    pub verify: VerifySettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            method: None,
            seed: 0,
            output_dir: PathBuf::from("runs"),
            environment: None,
            control: ControlSettings::default(),
            policy_gradient: PolicyGradientSettings::default(),
            diffusion: DiffusionSettings::default(),
            planning: PlanningSettings::default(),
            verify: VerifySettings::default(),
        }
    }
}

/// Sampling-based control shared by MPPI and policy gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSettings {
    pub temperature: f64,
    /// Per-control-dimension variance of the perturbation kernel.
    pub noise_variance: Vec<f64>,
    pub samples: usize,
    pub horizon: usize,
    pub iterations: usize,
    /// Environment steps of the receding-horizon loop.
    pub steps: usize,
    pub initial_state: Option<Vec<f64>>,
    /// Flat nominal controls for the regularized variant (zero when absent).
    pub nominal: Option<Vec<f64>>,
}

impl Default for ControlSettings {
    fn default() -> Self {
        ControlSettings {
            temperature: 1.0,
            noise_variance: vec![16.0],
            samples: 1024,
            horizon: 50,
            iterations: 1,
            steps: 150,
            initial_state: None,
            nominal: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyGradientSettings {
    pub samples: usize,
    pub iterations: usize,
    /// Step size of the vanilla estimator's `μ += η Σ g` update.
    pub learning_rate: f64,
}

impl Default for PolicyGradientSettings {
    fn default() -> Self {
        PolicyGradientSettings {
            samples: 64,
            iterations: 100,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScheduleSettings {
    /// Geometric σ from `sigma_min` to `sigma_max`.
    Ve { sigma_min: f64, sigma_max: f64, steps: usize },
    /// Linear β from `beta_min` to `beta_max`.
    Vp { beta_min: f64, beta_max: f64, steps: usize },
}

impl ScheduleSettings {
    pub fn build(&self) -> gibbs_control_core::Result<NoiseSchedule> {
        match *self {
            ScheduleSettings::Ve {
                sigma_min,
                sigma_max,
                steps,
            } => NoiseSchedule::ve_geometric(sigma_min, sigma_max, steps),
            ScheduleSettings::Vp {
                beta_min,
                beta_max,
                steps,
            } => NoiseSchedule::vp_linear(beta_min, beta_max, steps),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSettings {
    pub schedule: ScheduleSettings,
    pub sampler: Sampler,
    /// Scalar data points of the kernel-density target.
    pub data: Vec<f64>,
    pub bandwidth: f64,
    pub paths: usize,
    pub bins: usize,
}

impl Default for DiffusionSettings {
    fn default() -> Self {
        DiffusionSettings {
            schedule: ScheduleSettings::Ve {
                sigma_min: 0.01,
                sigma_max: 10.0,
                steps: 1000,
            },
            sampler: Sampler::Ancestral,
            data: vec![-1.0, 1.0],
            bandwidth: 0.05,
            paths: 20_000,
            bins: 80,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanningSettings {
    pub schedule: ScheduleSettings,
    pub sampler: Sampler,
    /// Guidance scale α.
    pub alpha: f64,
    /// Isotropic Σ replacing the sampler's step variance.
    pub covariance: Option<f64>,
    pub fd_step: f64,
    pub episodes: usize,
    pub required_success_rate: f64,
    pub demonstrations: DemoSettings,
    pub guidance: NavigationGuidanceSettings,
    pub episode: EpisodeSettings,
}

impl Default for PlanningSettings {
    fn default() -> Self {
        PlanningSettings {
            schedule: ScheduleSettings::Vp {
                beta_min: 1e-3,
                beta_max: 0.2,
                steps: 50,
            },
            sampler: Sampler::Ancestral,
            alpha: 100.0,
            covariance: None,
            fd_step: 1e-5,
            episodes: 50,
            required_success_rate: 0.9,
            demonstrations: DemoSettings::default(),
            guidance: NavigationGuidanceSettings::default(),
            episode: EpisodeSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    SmoothedClosedForm,
    MppiEquivalence,
    JensenBound,
    FreeEnergy,
    PgIdentity,
    PgLinear,
    SamplerMoments,
    ScoreIdentity,
    DsmLoss,
}

impl Check {
    pub const ALL: [Check; 9] = [
        Check::SmoothedClosedForm,
        Check::MppiEquivalence,
        Check::JensenBound,
        Check::FreeEnergy,
        Check::PgIdentity,
        Check::PgLinear,
        Check::SamplerMoments,
        Check::ScoreIdentity,
        Check::DsmLoss,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    pub checks: Vec<Check>,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            checks: Check::ALL.to_vec(),
        }
    }
}

/// Config problem with the offending field and its source position.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub path: Option<PathBuf>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = &self.path {
            write!(f, "{}", p.display())?;
        }
        if let Some(l) = self.line {
            if self.path.is_some() {
                f.write_str(":")?;
            }
            write!(f, "{l}")?;
            if let Some(c) = self.column {
                write!(f, ":{c}")?;
            }
        }
        if self.path.is_some() || self.line.is_some() {
            f.write_str(": ")?;
        }
        if let Some(field) = &self.field {
            write!(f, "{field}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl ExperimentConfig {
    /// Parse and validate, filling `method` from `default_method` if absent.
    pub fn from_json(text: &str, default_method: Option<Method>) -> Result<Self, ConfigError> {
        let mut cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError {
            path: None,
            line: Some(e.line()),
            column: Some(e.column()),
            field: None,
            message: e.to_string(),
        })?;
        if cfg.method.is_none() {
            cfg.method = default_method;
        }
        cfg.resolve();
        cfg.validate().map_err(|(field, message)| {
            let pos = locate(text, &field);
            ConfigError {
                path: None,
                line: pos.map(|p| p.0),
                column: pos.map(|p| p.1),
                field: Some(field),
                message,
            }
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path, default_method: Option<Method>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: Some(path.to_path_buf()),
            line: None,
            column: None,
            field: None,
            message: e.to_string(),
        })?;
        Self::from_json(&text, default_method).map_err(|e| ConfigError {
            path: Some(path.to_path_buf()),
            ..e
        })
    }

    pub fn method(&self) -> Method {
        self.method.unwrap_or(Method::Verify)
    }

    /// Fill in the environment default for the method.
    fn resolve(&mut self) {
        if self.environment.is_none() {
            self.environment = Some(match self.method() {
                Method::Plan => Environment::PointMassNav(PointMassNav::default()),
                _ => Environment::Pendulum(Pendulum::default()),
            });
        }
    }

    pub fn environment(&self) -> &Environment {
        self.environment.as_ref().expect("resolved")
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.control
            .initial_state
            .clone()
            .unwrap_or_else(|| self.environment().default_initial_state())
    }

    pub fn kernel(&self) -> gibbs_control_core::Result<NoiseKernel> {
        let c = &self.control;
        NoiseKernel::new(Covariance::diagonal(&c.noise_variance)?, c.temperature)
    }

    pub fn nominal(&self) -> gibbs_control_core::Result<Option<ControlSequence>> {
        match &self.control.nominal {
            Some(v) => ControlSequence::from_flat(self.control.noise_variance.len(), v.clone()).map(Some),
            None => Ok(None),
        }
    }

    pub fn planning_env(&self) -> Option<&PointMassNav> {
        match self.environment() {
            Environment::PointMassNav(e) => Some(e),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), (String, String)> {
        fn positive(field: &str, v: f64) -> Result<(), (String, String)> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err((field.into(), format!("must be finite and > 0 (got {v})")))
            }
        }
        fn at_least_one(field: &str, v: usize) -> Result<(), (String, String)> {
            if v >= 1 {
                Ok(())
            } else {
                Err((field.into(), "must be >= 1".into()))
            }
        }
        fn core_err(field: &str) -> impl Fn(gibbs_control_core::Error) -> (String, String) + '_ {
            move |e| (field.to_string(), e.to_string())
        }

        let method = self.method();
        let env = self.environment();
        match method {
            Method::Mppi | Method::MppiRegularized | Method::Pg | Method::PgExp => {
                let c = &self.control;
                positive("control.temperature", c.temperature)?;
                if c.noise_variance.len() != env.control_dim() {
                    return Err((
                        "control.noise_variance".into(),
                        format!("needs {} entries for {}", env.control_dim(), env.name()),
                    ));
                }
                for v in &c.noise_variance {
                    positive("control.noise_variance", *v)?;
                }
                at_least_one("control.horizon", c.horizon)?;
                if matches!(method, Method::Mppi | Method::MppiRegularized) {
                    at_least_one("control.samples", c.samples)?;
                    at_least_one("control.iterations", c.iterations)?;
                    at_least_one("control.steps", c.steps)?;
                }
                if self.initial_state().len() != env.state_dim() {
                    return Err((
                        "control.initial_state".into(),
                        format!("needs {} entries for {}", env.state_dim(), env.name()),
                    ));
                }
                if let Some(n) = self.nominal().map_err(core_err("control.nominal"))? {
                    if n.horizon() != c.horizon {
                        return Err(("control.nominal".into(), "length must be horizon × control dimension".into()));
                    }
                }
                if matches!(method, Method::Pg | Method::PgExp) {
                    let p = &self.policy_gradient;
                    at_least_one("policy_gradient.samples", p.samples)?;
                    at_least_one("policy_gradient.iterations", p.iterations)?;
                    positive("policy_gradient.learning_rate", p.learning_rate)?;
                }
            }
            Method::Diffuse => {
                let d = &self.diffusion;
                d.schedule.build().map_err(core_err("diffusion.schedule"))?;
                if d.data.is_empty() {
                    return Err(("diffusion.data".into(), "needs at least one point".into()));
                }
                if d.data.iter().any(|v| !v.is_finite()) {
                    return Err(("diffusion.data".into(), "entries must be finite".into()));
                }
                if !(d.bandwidth.is_finite() && d.bandwidth >= 0.0) {
                    return Err(("diffusion.bandwidth".into(), "must be finite and >= 0".into()));
                }
                at_least_one("diffusion.paths", d.paths)?;
                at_least_one("diffusion.bins", d.bins)?;
            }
            Method::Plan => {
                let p = &self.planning;
                if self.planning_env().is_none() {
                    return Err(("environment".into(), "planning needs the point_mass_nav environment".into()));
                }
                p.schedule.build().map_err(core_err("planning.schedule"))?;
                if !(p.alpha.is_finite() && p.alpha >= 0.0) {
                    return Err(("planning.alpha".into(), format!("must be finite and >= 0 (got {})", p.alpha)));
                }
                if let Some(c) = p.covariance {
                    positive("planning.covariance", c)?;
                }
                positive("planning.fd_step", p.fd_step)?;
                at_least_one("planning.episodes", p.episodes)?;
                if !(0.0..=1.0).contains(&p.required_success_rate) {
                    return Err(("planning.required_success_rate".into(), "must lie in [0, 1]".into()));
                }
                let d = &p.demonstrations;
                at_least_one("planning.demonstrations.count", d.count)?;
                at_least_one("planning.demonstrations.horizon", d.horizon)?;
                at_least_one("planning.demonstrations.path_steps", d.path_steps)?;
                if !(d.bandwidth.is_finite() && d.bandwidth > 0.0) {
                    return Err(("planning.demonstrations.bandwidth".into(), "must be finite and > 0".into()));
                }
                if !(d.detour[0] >= 0.0 && d.detour[1] >= d.detour[0]) {
                    return Err(("planning.demonstrations.detour".into(), "needs 0 <= lo <= hi".into()));
                }
                p.episode.validate().map_err(core_err("planning.episode"))?;
                if p.episode.initial_state.len() != 2 {
                    return Err(("planning.episode.initial_state".into(), "needs 2 entries".into()));
                }
            }
            Method::Verify => {
                if self.verify.checks.is_empty() {
                    return Err(("verify.checks".into(), "needs at least one check".into()));
                }
            }
        }
        Ok(())
    }
}

/// Line and column (1-based) of the last key of a dotted path, searching
/// each key after the position of the previous one.
fn locate(text: &str, field: &str) -> Option<(usize, usize)> {
    let mut from = 0;
    let mut hit = None;
    for key in field.split('.') {
        let needle = format!("\"{key}\"");
        let at = from + text[from..].find(&needle)?;
        hit = Some(at);
        from = at + needle.len();
    }
    let at = hit?;
    let line = text[..at].matches('\n').count() + 1;
    let column = at - text[..at].rfind('\n').map_or(0, |p| p + 1) + 1;
    Some((line, column))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_resolves_defaults() {
        let cfg = ExperimentConfig::from_json("{}", Some(Method::Mppi)).unwrap();
        assert_eq!(cfg.method, Some(Method::Mppi));
        assert_eq!(cfg.environment().name(), "pendulum");
        let plan = ExperimentConfig::from_json("{}", Some(Method::Plan)).unwrap();
        assert_eq!(plan.environment().name(), "point_mass_nav");
    }

    #[test]
    fn zero_temperature_names_the_field_and_line() {
        let text = "{\n  \"method\": \"mppi\",\n  \"control\": {\n    \"samples\": 8,\n    \"temperature\": 0\n  }\n}";
        let err = ExperimentConfig::from_json(text, None).unwrap_err();
        assert_eq!(err.field.as_deref(), Some("control.temperature"));
        assert_eq!(err.line, Some(5));
        assert!(err.to_string().starts_with("5:5: control.temperature:"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let err = ExperimentConfig::from_json("{\n \"sede\": 3\n}", None).unwrap_err();
        assert_eq!(err.line, Some(2));
        assert!(err.message.contains("unknown field"));
    }

    #[test]
    fn planning_requires_navigation() {
        let text = r#"{"method": "plan", "environment": {"name": "pendulum", "params": {}}}"#;
        let err = ExperimentConfig::from_json(text, None).unwrap_err();
        assert_eq!(err.field.as_deref(), Some("environment"));
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ExperimentConfig::from_json(r#"{"seed": 9}"#, Some(Method::Diffuse)).unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text, None).unwrap(), cfg);
    }
}
