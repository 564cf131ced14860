//! Scenario configuration files (TOML) and assembly of the run inputs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::{beta_scaling, Component, ErrorBound, ErrorBoundConfig, SquaredExponentialKernel};
use crate::sampled::BoxGrid;
use crate::sim::{f_range_on_grid, AccScenario, BaselineOptions, ControlProblem, ModelSpec, RunOptions, SampledOptions};
use crate::trigger::{sigma_floor_condition, TriggerConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Continuous,
    Sampled,
    Baseline,
    ExactModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpSection {
    pub lengthscale_f: f64,
    pub lengthscale_g: f64,
    pub signal_std_f: f64,
    pub signal_std_g: f64,
    pub noise_std: f64,
    /// Input magnitude of the initial sample; defaults to the excitation threshold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_input: Option<f64>,
}

impl Default for GpSection {
    fn default() -> Self {
        Self {
            lengthscale_f: 1.0,
            lengthscale_g: 2.0,
            signal_std_f: 0.1,
            signal_std_g: 4e-4,
            noise_std: 0.01,
            init_input: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub delta: f64,
    pub tau_f: f64,
    pub tau_g: f64,
    /// Domain box in state coordinates `[v - v0, z]`.
    pub domain_lower: Vec<f64>,
    pub domain_upper: Vec<f64>,
    pub g_lower: f64,
    pub g_upper: f64,
    /// Bounds on `f`; taken from the domain grid when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_upper: Option<f64>,
    /// Use this scaling for `g` instead of the information-based one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_g: Option<f64>,
    /// Std floor of `f`; defaults to the floor of `g`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_floor_f: Option<f64>,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            delta: 0.01,
            tau_f: 1e-6,
            tau_g: 1e-6,
            domain_lower: vec![-2.0, 20.0],
            domain_upper: vec![12.0, 105.0],
            g_lower: 1.0 / 2000.0,
            g_upper: 3.0 / 1000.0,
            f_lower: None,
            f_upper: None,
            beta_g: None,
            sigma_floor_f: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriggerSection {
    pub epsilon: f64,
    pub gamma: f64,
    /// Fixed excitation threshold instead of the derived one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_gp: Option<f64>,
}

impl Default for TriggerSection {
    fn default() -> Self {
        Self { epsilon: 0.2, gamma: 0.5, u_gp: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub duration: f64,
    pub step: f64,
    pub seed: u64,
    pub output_dir: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { duration: 30.0, step: 1e-3, seed: 0, output_dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: String,
    pub values: Vec<f64>,
    pub repetitions: usize,
    /// Triggers are counted up to this time.
    pub window: f64,
    /// Half-width of the uniform perturbation of `v0`, `vd` and the initial state.
    pub perturbation: f64,
    /// Measurement noise levels crossed with `values`; empty keeps the `gp` one.
    pub noise_levels: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            parameter: "gamma".into(),
            values: vec![0.1, 0.5, 1.0],
            repetitions: 100,
            window: 8.0,
            perturbation: 2.0,
            noise_levels: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub scenario: AccScenario,
    #[serde(default)]
    pub gp: GpSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default)]
    pub trigger: TriggerSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampled: Option<SampledOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineOptions>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Continuous,
            scenario: AccScenario::default(),
            gp: GpSection::default(),
            bounds: BoundsSection::default(),
            trigger: TriggerSection::default(),
            sampled: None,
            baseline: None,
            run: RunSection::default(),
            sweep: None,
        }
    }
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self { period: 0.1, excite: false }
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config(&text)
}

/// Effective configuration as TOML; `parse_config(&emit(c))` gives back `c`.
pub fn emit(cfg: &ScenarioConfig) -> String {
    toml::to_string(cfg).expect("config serializes")
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be positive, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario.validate().map_err(|r| invalid("scenario", r))?;
        let g = &self.gp;
        positive("gp.lengthscale_f", g.lengthscale_f)?;
        positive("gp.lengthscale_g", g.lengthscale_g)?;
        positive("gp.signal_std_f", g.signal_std_f)?;
        positive("gp.signal_std_g", g.signal_std_g)?;
        positive("gp.noise_std", g.noise_std)?;
        if let Some(u) = g.init_input {
            if !(u >= 0.0) {
                return Err(invalid("gp.init_input", format!("must be nonnegative, got {u}")));
            }
        }
        let b = &self.bounds;
        if !(b.delta > 0.0 && b.delta < 1.0) {
            return Err(invalid("bounds.delta", format!("must lie in (0, 1), got {}", b.delta)));
        }
        positive("bounds.tau_f", b.tau_f)?;
        positive("bounds.tau_g", b.tau_g)?;
        if b.domain_lower.len() != 2 || b.domain_upper.len() != 2 {
            return Err(invalid("bounds.domain_lower", "domain must have two entries per bound"));
        }
        if b.domain_lower.iter().zip(&b.domain_upper).any(|(l, u)| !(u > l)) {
            return Err(invalid("bounds.domain_upper", "every upper entry must exceed the lower one"));
        }
        positive("bounds.g_lower", b.g_lower)?;
        if !(b.g_upper > b.g_lower) {
            return Err(invalid("bounds.g_upper", "must exceed g_lower"));
        }
        if let Some(v) = b.beta_g {
            positive("bounds.beta_g", v)?;
        }
        if let Some(v) = b.sigma_floor_f {
            positive("bounds.sigma_floor_f", v)?;
        }
        positive("trigger.epsilon", self.trigger.epsilon)?;
        positive("trigger.gamma", self.trigger.gamma)?;
        if let Some(u) = self.trigger.u_gp {
            if !(u >= 0.0) {
                return Err(invalid("trigger.u_gp", format!("must be nonnegative, got {u}")));
            }
        }
        positive("run.duration", self.run.duration)?;
        positive("run.step", self.run.step)?;
        if let Some(s) = &self.sampled {
            positive("sampled.period", s.period)?;
            positive("sampled.u_bar", s.u_bar)?;
            positive("sampled.zeta1", s.zeta1)?;
            positive("sampled.inflation", s.inflation)?;
            if s.phi_tilde < 0.0 {
                return Err(invalid("sampled.phi_tilde", "must be nonnegative"));
            }
            if s.substeps == 0 {
                return Err(invalid("sampled.substeps", "must be at least 1"));
            }
            if s.grid_points < 2 || s.xi3_grid_points < 2 {
                return Err(invalid("sampled.grid_points", "need at least two points per axis"));
            }
            if s.refresh_every == 0 {
                return Err(invalid("sampled.refresh_every", "must be at least 1"));
            }
        }
        if let Some(bl) = &self.baseline {
            positive("baseline.period", bl.period)?;
        }
        if let Some(sw) = &self.sweep {
            if sw.repetitions == 0 {
                return Err(invalid("sweep.repetitions", "must be at least 1"));
            }
            if sw.values.is_empty() {
                return Err(invalid("sweep.values", "must not be empty"));
            }
            positive("sweep.window", sw.window)?;
            if sw.perturbation < 0.0 {
                return Err(invalid("sweep.perturbation", "must be nonnegative"));
            }
            for v in &sw.noise_levels {
                positive("sweep.noise_levels", *v)?;
            }
            let mut probe = self.clone();
            probe.apply_parameter(&sw.parameter, sw.values[0])?;
        }
        if self.mode == Mode::Sampled && self.sampled.is_none() {
            return Err(invalid("sampled", "sampled mode needs a [sampled] section"));
        }
        Ok(())
    }

    /// Set a sweepable parameter by name.
    pub fn apply_parameter(&mut self, name: &str, value: f64) -> Result<(), ConfigError> {
        match name {
            "u_gp" => self.trigger.u_gp = Some(value),
            "gamma" => self.trigger.gamma = value,
            "epsilon" => self.trigger.epsilon = value,
            "signal_std_g" => self.gp.signal_std_g = value,
            "lengthscale_g" => self.gp.lengthscale_g = value,
            "signal_std_f" => self.gp.signal_std_f = value,
            "lengthscale_f" => self.gp.lengthscale_f = value,
            "noise_std" => self.gp.noise_std = value,
            "period" => match &mut self.sampled {
                Some(s) => s.period = value,
                None => return Err(invalid("sweep.parameter", "`period` needs a [sampled] section")),
            },
            other => return Err(invalid("sweep.parameter", format!("unknown parameter `{other}`"))),
        }
        Ok(())
    }

    pub fn error_bound_config(&self, sigma_floor_f: f64, sigma_floor_g: f64) -> ErrorBoundConfig {
        ErrorBoundConfig {
            delta: self.bounds.delta,
            tau_f: self.bounds.tau_f,
            tau_g: self.bounds.tau_g,
            domain_lower: self.bounds.domain_lower.clone(),
            domain_upper: self.bounds.domain_upper.clone(),
            sigma_floor_f,
            sigma_floor_g,
        }
    }

    /// Resolve derived quantities and build the run inputs.
    pub fn setup(&self) -> Result<Setup, ConfigError> {
        let probe = self.error_bound_config(1.0, 1.0);
        let n = probe.domain_lower.len();
        let beta_f = beta_scaling(&probe, Component::F, n).map_err(|e| invalid("bounds", e.to_string()))?;
        let beta_g = match self.bounds.beta_g {
            Some(v) => v,
            None => beta_scaling(&probe, Component::G, n).map_err(|e| invalid("bounds", e.to_string()))?,
        };
        let t = &self.trigger;
        let mut trigger = TriggerConfig::derive(
            t.epsilon,
            t.gamma,
            self.bounds.g_lower,
            beta_g,
            self.gp.signal_std_g,
            self.gp.signal_std_f,
            self.gp.noise_std,
        );
        if let Some(u) = t.u_gp {
            trigger.u_gp = u;
        }
        let floor_g = sigma_floor_condition(t.epsilon, t.gamma, self.bounds.g_lower, beta_g);
        let floor_f = self.bounds.sigma_floor_f.unwrap_or(floor_g);
        let bound = ErrorBound { beta_f, beta_g, sigma_floor_f: floor_f, sigma_floor_g: floor_g };

        let domain = (self.bounds.domain_lower.clone(), self.bounds.domain_upper.clone());
        let grid = BoxGrid::new(domain.0.clone(), domain.1.clone(), 101);
        let scn = &self.scenario;
        let (f_lo, f_hi) = f_range_on_grid(&*scn.dynamics((0.0, 0.0), (0.0, 0.0)).f, &grid);
        let f_bounds = (self.bounds.f_lower.unwrap_or(f_lo), self.bounds.f_upper.unwrap_or(f_hi));
        let g_bounds = (self.bounds.g_lower, self.bounds.g_upper);
        let problem = scn.problem(f_bounds, g_bounds, domain);
        if let Some(x) = problem.dynamics.bound_violations(&grid).first() {
            return Err(invalid(
                "bounds",
                format!("true dynamics leave the declared f/g bounds at state {x:?}"),
            ));
        }
        let model = ModelSpec {
            kernel_f: SquaredExponentialKernel::isotropic(self.gp.signal_std_f, self.gp.lengthscale_f, n),
            kernel_g: SquaredExponentialKernel::isotropic(self.gp.signal_std_g, self.gp.lengthscale_g, n),
            sigma_on: self.gp.noise_std,
            init_input: self.gp.init_input.unwrap_or(trigger.u_gp),
        };
        Ok(Setup {
            problem,
            model,
            bound,
            trigger,
            run: RunOptions { duration: self.run.duration, step: self.run.step, seed: self.run.seed },
            sampled: self.sampled.unwrap_or_default(),
            baseline: self.baseline.unwrap_or_default(),
        })
    }
}

/// Everything needed to run one configured experiment.
#[derive(Clone)]
pub struct Setup {
    pub problem: ControlProblem,
    pub model: ModelSpec,
    pub bound: ErrorBound,
    pub trigger: TriggerConfig,
    pub run: RunOptions,
    pub sampled: SampledOptions,
    pub baseline: BaselineOptions,
}
