//! True dynamics, the ACC scenario and the closed-loop simulations.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{
    decide, exact_projection, ratio_from_posterior, safety_filter, sign0, xi_from_posterior, Branch, CbfSpec,
    StateFn,
};
use crate::gp::{CompositeGp, DynamicsModel, ErrorBound, GpError, Posterior, SquaredExponentialKernel, TrainingSet};
use crate::sampled::{
    check_admissibility, drift_bound_on_grid, estimate_bound_constants, max_xi3_over_safe_set, sampled_safety_filter,
    sampled_trigger, Admissibility, BoundConstants, BoxGrid, DynamicsBounds, SampledConfig,
};
use crate::trigger::{excitation_filter, should_trigger, EventLog, TriggerConfig};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("step size must be positive, got {0}")]
    BadStep(f64),
    #[error(transparent)]
    Gp(#[from] GpError),
}

/// `x' = A x + b (f(x) + g(x) u)` with `f`, `g` hidden from the controller.
#[derive(Clone)]
pub struct TrueDynamics {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub f: StateFn,
    pub g: StateFn,
    pub f_bounds: (f64, f64),
    pub g_bounds: (f64, f64),
}

impl std::fmt::Debug for TrueDynamics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrueDynamics")
            .field("a", &self.a)
            .field("b", &self.b)
            .field("f_bounds", &self.f_bounds)
            .field("g_bounds", &self.g_bounds)
            .finish_non_exhaustive()
    }
}

impl TrueDynamics {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn velocity(&self, x: &[f64], u: f64) -> DVector<f64> {
        let xv = DVector::from_column_slice(x);
        &self.a * xv + &self.b * ((self.f)(x) + (self.g)(x) * u)
    }

    /// Nodes where `g < g_lower`, or `f`, `g` leave their declared bounds.
    pub fn bound_violations(&self, grid: &BoxGrid) -> Vec<Vec<f64>> {
        grid.points()
            .filter(|x| {
                let (f, g) = ((self.f)(x), (self.g)(x));
                !(f >= self.f_bounds.0 && f <= self.f_bounds.1 && g >= self.g_bounds.0 && g <= self.g_bounds.1)
            })
            .collect()
    }
}

/// The true `f`, `g` exposed as a zero-variance model.
pub struct ExactModel<'a>(pub &'a TrueDynamics);

impl DynamicsModel for ExactModel<'_> {
    fn posterior(&self, x: &[f64]) -> Posterior {
        Posterior { mean_f: (self.0.f)(x), std_f: 0.0, mean_g: (self.0.g)(x), std_g: 0.0 }
    }
}

/// Classical RK4 step with `u` held.
pub fn rk4_step(dynamics: &TrueDynamics, x: &[f64], u: f64, h: f64) -> Result<Vec<f64>, SimError> {
    if !(h > 0.0) {
        return Err(SimError::BadStep(h));
    }
    let x0 = DVector::from_column_slice(x);
    let k1 = dynamics.velocity(x, u);
    let k2 = dynamics.velocity((&x0 + &k1 * (h / 2.0)).as_slice(), u);
    let k3 = dynamics.velocity((&x0 + &k2 * (h / 2.0)).as_slice(), u);
    let k4 = dynamics.velocity((&x0 + &k3 * h).as_slice(), u);
    let next = x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(SimError::NonFinite { t: f64::NAN });
    }
    Ok(next.as_slice().to_vec())
}

/// Noisy observation `f(x) + g(x) u + w`, `w ~ N(0, sigma_on²)`.
pub fn measure(dynamics: &TrueDynamics, x: &[f64], u: f64, sigma_on: f64, rng: &mut ChaCha8Rng) -> f64 {
    let clean = (dynamics.f)(x) + (dynamics.g)(x) * u;
    if sigma_on == 0.0 {
        return clean;
    }
    clean + Normal::new(0.0, sigma_on).expect("finite noise std").sample(rng)
}

/// Adaptive cruise control. State `[v - v0, z]`: relative speed to the front
/// vehicle and distance to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccScenario {
    pub mass: f64,
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    pub v0: f64,
    pub vd: f64,
    pub time_headway: f64,
    pub alpha_gain: f64,
    pub nominal_gain: f64,
    /// Initial absolute speed.
    pub v_init: f64,
    /// Initial distance.
    pub z_init: f64,
}

impl Default for AccScenario {
    fn default() -> Self {
        Self {
            mass: 1650.0,
            f0: 0.2,
            f1: 10.0,
            f2: 0.5,
            v0: 14.0,
            vd: 24.0,
            time_headway: 1.8,
            alpha_gain: 65.0,
            nominal_gain: -2000.0,
            v_init: 18.0,
            z_init: 100.0,
        }
    }
}

impl AccScenario {
    pub fn x0(&self) -> Vec<f64> {
        vec![self.v_init - self.v0, self.z_init]
    }

    pub fn rolling_resistance(&self, v: f64) -> f64 {
        self.f0 + self.f1 * v + self.f2 * v * v
    }

    pub fn psi(&self, x: &[f64]) -> f64 {
        x[1] - self.time_headway * (x[0] + self.v0)
    }

    pub fn nominal(&self, x: &[f64]) -> f64 {
        self.nominal_gain * (x[0] + self.v0 - self.vd)
    }

    pub fn validate(&self) -> Result<(), String> {
        for (k, v) in [
            ("mass", self.mass),
            ("v0", self.v0),
            ("vd", self.vd),
            ("time_headway", self.time_headway),
            ("alpha_gain", self.alpha_gain),
        ] {
            if !(v > 0.0) {
                return Err(format!("scenario.{k} must be positive, got {v}"));
            }
        }
        if self.psi(&self.x0()) < 0.0 {
            return Err(format!(
                "scenario initial state (v_init = {}, z_init = {}) lies outside the safe set",
                self.v_init, self.z_init
            ));
        }
        Ok(())
    }

    pub fn cbf(&self) -> CbfSpec {
        let (th, v0, gain) = (self.time_headway, self.v0, self.alpha_gain);
        CbfSpec {
            psi: Arc::new(move |x: &[f64]| x[1] - th * (x[0] + v0)),
            grad_psi: Some(Arc::new(move |_: &[f64]| vec![-th, 1.0])),
            alpha: Arc::new(move |p| gain * p),
            a: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -1.0, 0.0]),
            b: DVector::from_column_slice(&[1.0, 0.0]),
        }
    }

    /// True dynamics; `g_bounds` are the prior bounds used by the filter.
    pub fn dynamics(&self, f_bounds: (f64, f64), g_bounds: (f64, f64)) -> TrueDynamics {
        let s = *self;
        let s2 = *self;
        TrueDynamics {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -1.0, 0.0]),
            b: DVector::from_column_slice(&[1.0, 0.0]),
            f: Arc::new(move |x: &[f64]| -s.rolling_resistance(x[0] + s.v0) / s.mass),
            g: Arc::new(move |x: &[f64]| 2.0 * (1.0 + 0.5 * ((x[0] + s2.v0) / 2.0).sin()) / s2.mass),
            f_bounds,
            g_bounds,
        }
    }

    pub fn problem(&self, f_bounds: (f64, f64), g_bounds: (f64, f64), domain: (Vec<f64>, Vec<f64>)) -> ControlProblem {
        let s = *self;
        ControlProblem {
            dynamics: self.dynamics(f_bounds, g_bounds),
            cbf: self.cbf(),
            nominal: Arc::new(move |x: &[f64]| s.nominal(x)),
            x0: self.x0(),
            domain,
            state_labels: vec!["v".into(), "z".into()],
            display_offset: vec![self.v0, 0.0],
        }
    }
}

/// Sup and inf of `f` over the grid.
pub fn f_range_on_grid(f: &dyn Fn(&[f64]) -> f64, grid: &BoxGrid) -> (f64, f64) {
    grid.points().map(|x| f(&x)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Everything a closed-loop run needs besides the learner.
#[derive(Clone)]
pub struct ControlProblem {
    pub dynamics: TrueDynamics,
    pub cbf: CbfSpec,
    pub nominal: StateFn,
    pub x0: Vec<f64>,
    /// Box on which error bounds and constants are evaluated.
    pub domain: (Vec<f64>, Vec<f64>),
    /// Column names for the state in trajectory output.
    pub state_labels: Vec<String>,
    /// Added to the state before writing it out.
    pub display_offset: Vec<f64>,
}

/// Learner configuration: kernels, noise and the initial training point.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub kernel_f: SquaredExponentialKernel,
    pub kernel_g: SquaredExponentialKernel,
    pub sigma_on: f64,
    /// Magnitude of the input used for the initial sample at `x0`.
    pub init_input: f64,
}

impl ModelSpec {
    /// Model holding one noisy sample at `x0`, taken with an input in the
    /// direction that raises the barrier derivative.
    pub fn seed_model(&self, problem: &ControlProblem, rng: &mut ChaCha8Rng) -> Result<CompositeGp, GpError> {
        let x0 = &problem.x0;
        let c = problem.cbf.grad_dot_b(&problem.cbf.gradient(x0));
        let dir = if c == 0.0 { 1.0 } else { sign0(c) };
        let u = dir * self.init_input;
        let y = measure(&problem.dynamics, x0, u, self.sigma_on, rng);
        let mut data = TrainingSet::empty(self.sigma_on.max(1e-12));
        data.push(x0, u, y);
        CompositeGp::new(self.kernel_f.clone(), self.kernel_g.clone(), data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub duration: f64,
    pub step: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<f64>,
    pub psi_values: Vec<f64>,
    pub gamma_ratios: Vec<f64>,
    pub event_flags: Vec<bool>,
    pub branches: Vec<String>,
    pub xi: Vec<[f64; 3]>,
    /// Sample index and substep, only filled in sampled mode.
    pub sample_index: Vec<usize>,
    pub substep: Vec<usize>,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, t: f64, x: &[f64], u: f64, psi: f64, gamma: f64, event: bool, branch: &str, xi: [f64; 3]) {
        self.times.push(t);
        self.states.push(x.to_vec());
        self.inputs.push(u);
        self.psi_values.push(psi);
        self.gamma_ratios.push(gamma);
        self.event_flags.push(event);
        self.branches.push(branch.to_string());
        self.xi.push(xi);
    }

    pub fn is_sampled(&self) -> bool {
        !self.sample_index.is_empty()
    }

    pub fn final_state(&self) -> Option<&[f64]> {
        self.states.last().map(|s| s.as_slice())
    }

    pub fn min_psi(&self) -> f64 {
        self.psi_values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_gamma(&self) -> f64 {
        self.gamma_ratios.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Mean of psi over rows with `t >= from`.
    pub fn mean_psi_after(&self, from: f64) -> f64 {
        let v: Vec<f64> = self.times.iter().zip(&self.psi_values).filter(|(t, _)| **t >= from).map(|(_, p)| *p).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }

    pub fn write_csv<W: Write>(&self, w: W, labels: &[String], offset: &[f64]) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(labels.iter().cloned());
        header.extend(["u", "psi", "gamma", "event", "branch", "xi1", "xi2", "xi3"].map(String::from));
        if self.is_sampled() {
            header.extend(["k", "substep"].map(String::from));
        }
        wr.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.times[i].to_string()];
            row.extend(self.states[i].iter().zip(offset).map(|(x, o)| (x + o).to_string()));
            row.push(self.inputs[i].to_string());
            row.push(self.psi_values[i].to_string());
            row.push(self.gamma_ratios[i].to_string());
            row.push(u8::from(self.event_flags[i]).to_string());
            row.push(self.branches[i].clone());
            row.extend(self.xi[i].iter().map(|v| v.to_string()));
            if self.is_sampled() {
                row.push(self.sample_index[i].to_string());
                row.push(self.substep[i].to_string());
            }
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trajectory: Trajectory,
    pub events: EventLog,
    pub failure: Option<Failure>,
    /// Smallest psi over every integration point, including unlogged substeps.
    pub min_psi: f64,
    pub model: Option<CompositeGp>,
}

impl RunResult {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn trigger_count(&self) -> usize {
        self.events.len()
    }
}

fn branch_label(b: Branch) -> &'static str {
    match b {
        Branch::Nominal => "nominal",
        Branch::ClampPositiveSign => "clamp_pos",
        Branch::ClampNegativeSign => "clamp_neg",
    }
}

fn steps_for(duration: f64, h: f64) -> usize {
    (duration / h).round() as usize
}

fn integrate(problem: &ControlProblem, x: &[f64], u: f64, h: f64, t: f64) -> Result<Vec<f64>, SimError> {
    rk4_step(&problem.dynamics, x, u, h).map_err(|e| match e {
        SimError::NonFinite { .. } => SimError::NonFinite { t },
        other => other,
    })
}

/// Event-triggered loop: filter every step, and when the feasibility ratio
/// drops to `1 + eps` apply the excited input, measure and update the model.
pub fn run_continuous(
    problem: &ControlProblem,
    model: &ModelSpec,
    bound: &ErrorBound,
    trigger: &TriggerConfig,
    opts: &RunOptions,
) -> Result<RunResult, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut gp = model.seed_model(problem, &mut rng)?;
    let mut traj = Trajectory { seed: opts.seed, ..Default::default() };
    let mut log = EventLog::default();
    let mut failure = None;
    let mut x = problem.x0.clone();
    let mut min_psi = f64::INFINITY;
    let n = steps_for(opts.duration, opts.step);
    for k in 0..=n {
        let t = k as f64 * opts.step;
        let psi = problem.cbf.value(&x);
        min_psi = min_psi.min(psi);
        let post = gp.posterior(&x);
        let xi = xi_from_posterior(&problem.cbf, &post, bound, &x);
        let ratio = ratio_from_posterior(post.mean_g, post.std_g, bound);
        let decision = match decide(xi, ratio, (problem.nominal)(&x)) {
            Ok(d) => d,
            Err(e) => {
                traj.push(t, &x, f64::NAN, psi, ratio, false, "infeasible", [xi.xi1, xi.xi2, xi.xi3]);
                failure = Some(Failure { t, reason: e.to_string() });
                break;
            }
        };
        let mut u = decision.u;
        let mut event = false;
        if should_trigger(ratio, trigger.epsilon) {
            u = excitation_filter(&decision, trigger.u_gp);
            let y = measure(&problem.dynamics, &x, u, model.sigma_on, &mut rng);
            gp.push_point(&x, u, y)?;
            let post_ratio = crate::filter::feasibility_ratio(&gp, bound, &x);
            log.record(t, ratio, post_ratio, u, decision.u, decision.xi.xi_s);
            event = true;
        }
        traj.push(t, &x, u, psi, ratio, event, branch_label(decision.branch), [xi.xi1, xi.xi2, xi.xi3]);
        if k == n {
            break;
        }
        x = integrate(problem, &x, u, opts.step, t)?;
    }
    Ok(RunResult { trajectory: traj, events: log, failure, min_psi, model: Some(gp) })
}

/// Filter with the true `f`, `g` and no error margins.
pub fn run_exact_model(problem: &ControlProblem, opts: &RunOptions) -> Result<RunResult, SimError> {
    let exact = ExactModel(&problem.dynamics);
    let bound = ErrorBound::exact();
    let mut traj = Trajectory { seed: opts.seed, ..Default::default() };
    let mut x = problem.x0.clone();
    let mut min_psi = f64::INFINITY;
    let mut failure = None;
    let n = steps_for(opts.duration, opts.step);
    for k in 0..=n {
        let t = k as f64 * opts.step;
        let psi = problem.cbf.value(&x);
        min_psi = min_psi.min(psi);
        let d = match safety_filter(&problem.cbf, &exact, &bound, &x, (problem.nominal)(&x)) {
            Ok(d) => d,
            Err(e) => {
                failure = Some(Failure { t, reason: e.to_string() });
                break;
            }
        };
        traj.push(t, &x, d.u, psi, d.gamma_ratio, false, branch_label(d.branch), [d.xi.xi1, d.xi.xi2, d.xi.xi3]);
        if k == n {
            break;
        }
        x = integrate(problem, &x, d.u, opts.step, t)?;
    }
    Ok(RunResult { trajectory: traj, events: EventLog::default(), failure, min_psi, model: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineOptions {
    pub period: f64,
    /// Apply the excitation filter at sample times.
    pub excite: bool,
}

/// Periodic model updates with the filtered input. The input is the projection
/// onto the exact robust feasible set; the run fails once that set is empty.
pub fn run_time_triggered_baseline(
    problem: &ControlProblem,
    model: &ModelSpec,
    bound: &ErrorBound,
    trigger: &TriggerConfig,
    baseline: &BaselineOptions,
    opts: &RunOptions,
) -> Result<RunResult, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut gp = model.seed_model(problem, &mut rng)?;
    let mut traj = Trajectory { seed: opts.seed, ..Default::default() };
    let mut log = EventLog::default();
    let mut failure = None;
    let mut x = problem.x0.clone();
    let mut min_psi = f64::INFINITY;
    let every = ((baseline.period / opts.step).round() as usize).max(1);
    let n = steps_for(opts.duration, opts.step);
    for k in 0..=n {
        let t = k as f64 * opts.step;
        let psi = problem.cbf.value(&x);
        min_psi = min_psi.min(psi);
        let post = gp.posterior(&x);
        let xi = xi_from_posterior(&problem.cbf, &post, bound, &x);
        let ratio = ratio_from_posterior(post.mean_g, post.std_g, bound);
        let u_nom = (problem.nominal)(&x);
        let Some(mut u) = exact_projection(&xi, u_nom) else {
            traj.push(t, &x, f64::NAN, psi, ratio, false, "infeasible", [xi.xi1, xi.xi2, xi.xi3]);
            failure = Some(Failure { t, reason: format!("robust barrier constraint has no solution (ratio {ratio:.4})") });
            break;
        };
        let mut event = false;
        if k > 0 && k % every == 0 {
            let filtered = u;
            if baseline.excite && u.abs() < trigger.u_gp {
                u = -sign0(xi.xi_s) * trigger.u_gp;
            }
            let y = measure(&problem.dynamics, &x, u, model.sigma_on, &mut rng);
            gp.push_point(&x, u, y)?;
            let post_ratio = crate::filter::feasibility_ratio(&gp, bound, &x);
            log.record(t, ratio, post_ratio, u, filtered, xi.xi_s);
            event = true;
        }
        traj.push(t, &x, u, psi, ratio, event, "projection", [xi.xi1, xi.xi2, xi.xi3]);
        if k == n {
            break;
        }
        x = integrate(problem, &x, u, opts.step, t)?;
    }
    Ok(RunResult { trajectory: traj, events: log, failure, min_psi, model: Some(gp) })
}

/// Sampled-data loop settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledOptions {
    pub period: f64,
    pub u_bar: f64,
    pub phi_tilde: f64,
    pub zeta1: f64,
    pub substeps: usize,
    /// Grid nodes per axis for constant estimation.
    pub grid_points: usize,
    /// Grid nodes per axis for the maximum of `xi3` over the safe set.
    pub xi3_grid_points: usize,
    pub inflation: f64,
    /// Recompute the constants after this many model updates.
    pub refresh_every: usize,
    /// Log every substep instead of only sample instants.
    pub record_substeps: bool,
}

impl Default for SampledOptions {
    fn default() -> Self {
        Self {
            period: 0.01,
            u_bar: 20_000.0,
            phi_tilde: 1500.0,
            zeta1: 1.79,
            substeps: 50,
            grid_points: 41,
            xi3_grid_points: 101,
            inflation: 1.2,
            refresh_every: 10,
            record_substeps: false,
        }
    }
}

/// Prior bounds on `f`, `g` and the drift `A x + b f`. The `f` bound is the
/// declared one; the drift adds the largest `|A x|` on the grid.
pub fn dynamics_bounds(problem: &ControlProblem, grid: &BoxGrid) -> DynamicsBounds {
    let d = &problem.dynamics;
    let f_bar = d.f_bounds.0.abs().max(d.f_bounds.1.abs());
    let zero: &dyn Fn(&[f64]) -> f64 = &|_| 0.0;
    DynamicsBounds {
        f_lower: d.f_bounds.0,
        f_bar,
        g_bar: d.g_bounds.1,
        drift_bound: drift_bound_on_grid(&d.a, &d.b, zero, grid) + d.b.norm() * f_bar,
    }
}

/// Constants and margin for the current model.
pub fn sampled_config_for(
    problem: &ControlProblem,
    gp: &CompositeGp,
    bound: &ErrorBound,
    opts: &SampledOptions,
    max_xi3: f64,
) -> (BoundConstants, SampledConfig) {
    let grid = BoxGrid::new(problem.domain.0.clone(), problem.domain.1.clone(), opts.grid_points);
    let dyn_bounds = dynamics_bounds(problem, &grid);
    let prior = (gp.kernel_f.signal_std(), gp.kernel_g.signal_std());
    let consts = estimate_bound_constants(&problem.cbf, gp, bound, &grid, prior, &dyn_bounds, opts.inflation);
    let cfg = SampledConfig::assemble(opts.period, opts.u_bar, opts.phi_tilde, opts.zeta1, &consts, bound, prior.0, max_xi3);
    (consts, cfg)
}

/// Admissibility report for the initial model.
pub fn sampled_admissibility(
    problem: &ControlProblem,
    gp: &CompositeGp,
    bound: &ErrorBound,
    trigger: &TriggerConfig,
    opts: &SampledOptions,
) -> Result<(BoundConstants, SampledConfig, Admissibility), crate::sampled::SampledError> {
    let xi3_grid = BoxGrid::new(problem.domain.0.clone(), problem.domain.1.clone(), opts.xi3_grid_points);
    let max_xi3 = max_xi3_over_safe_set(&problem.cbf, gp, bound, &xi3_grid)?;
    let (consts, cfg) = sampled_config_for(problem, gp, bound, opts, max_xi3);
    let grid = BoxGrid::new(problem.domain.0.clone(), problem.domain.1.clone(), opts.grid_points);
    let adm = check_admissibility(&cfg, &problem.cbf, &grid, trigger.epsilon, bound.beta_g, bound.sigma_floor_g, trigger.u_gp);
    Ok((consts, cfg, adm))
}

#[derive(Debug, Clone)]
pub struct SampledRun {
    pub result: RunResult,
    pub admissibility: Admissibility,
    /// `(t, phi)` at every refresh of the constants.
    pub margins: Vec<(f64, f64)>,
}

/// Zero-order-hold loop: filter with the tightened constraint at sample
/// instants, trigger at `1 + eps + gamma`, integrate each interval in substeps.
pub fn run_sampled(
    problem: &ControlProblem,
    model: &ModelSpec,
    bound: &ErrorBound,
    trigger: &TriggerConfig,
    sopts: &SampledOptions,
    opts: &RunOptions,
) -> Result<SampledRun, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut gp = model.seed_model(problem, &mut rng)?;
    let (_, mut cfg, admissibility) = match sampled_admissibility(problem, &gp, bound, trigger, sopts) {
        Ok(v) => v,
        Err(e) => {
            let failure = Some(Failure { t: 0.0, reason: e.to_string() });
            let result = RunResult {
                trajectory: Trajectory { seed: opts.seed, ..Default::default() },
                events: EventLog::default(),
                failure,
                min_psi: problem.cbf.value(&problem.x0),
                model: Some(gp),
            };
            let empty = Admissibility {
                t_max: None,
                sampling_time_ok: false,
                input_quotient: f64::NAN,
                u_min: f64::NAN,
                input_bound_ok: false,
                excitation_fits_box: false,
                small_gradient_nodes: 0,
                small_gradient_condition_ok: false,
            };
            return Ok(SampledRun { result, admissibility: empty, margins: vec![] });
        }
    };
    let max_xi3 = cfg.max_xi3_over_safe_set;
    let mut margins = vec![(0.0, cfg.phi)];
    let mut traj = Trajectory { seed: opts.seed, ..Default::default() };
    let mut log = EventLog::default();
    let mut failure = None;
    let mut x = problem.x0.clone();
    let mut min_psi = f64::INFINITY;
    let mut since_refresh = 0;
    let h = sopts.period / sopts.substeps as f64;
    let n = steps_for(opts.duration, sopts.period);
    for k in 0..=n {
        let t_k = k as f64 * sopts.period;
        let psi = problem.cbf.value(&x);
        min_psi = min_psi.min(psi);
        let decision = match sampled_safety_filter(&problem.cbf, &gp, bound, &cfg, &x, (problem.nominal)(&x)) {
            Ok(d) => d,
            Err(e) => {
                let ratio = crate::filter::feasibility_ratio(&gp, bound, &x);
                traj.push(t_k, &x, f64::NAN, psi, ratio, false, "infeasible", [f64::NAN; 3]);
                traj.sample_index.push(k);
                traj.substep.push(0);
                failure = Some(Failure { t: t_k, reason: e.to_string() });
                break;
            }
        };
        let ratio = decision.gamma_ratio;
        let xi = decision.xi;
        let mut u = decision.u;
        let mut event = false;
        if sampled_trigger(ratio, trigger.epsilon, trigger.gamma) {
            u = excitation_filter(&decision, trigger.u_gp);
            let y = measure(&problem.dynamics, &x, u, model.sigma_on, &mut rng);
            gp.push_point(&x, u, y)?;
            let post_ratio = crate::filter::feasibility_ratio(&gp, bound, &x);
            log.record(t_k, ratio, post_ratio, u, decision.u, xi.xi_s);
            event = true;
            since_refresh += 1;
        }
        let label = branch_label(decision.branch);
        let xi_row = [xi.xi1, xi.xi2, xi.xi3];
        traj.push(t_k, &x, u, psi, ratio, event, label, xi_row);
        traj.sample_index.push(k);
        traj.substep.push(0);
        if k == n {
            break;
        }
        for s in 0..sopts.substeps {
            let t = t_k + s as f64 * h;
            if s > 0 {
                let p = problem.cbf.value(&x);
                min_psi = min_psi.min(p);
                if sopts.record_substeps {
                    let r = crate::filter::feasibility_ratio(&gp, bound, &x);
                    traj.push(t, &x, u, p, r, false, label, xi_row);
                    traj.sample_index.push(k);
                    traj.substep.push(s);
                }
            }
            x = integrate(problem, &x, u, h, t)?;
        }
        if since_refresh >= sopts.refresh_every {
            since_refresh = 0;
            cfg = sampled_config_for(problem, &gp, bound, sopts, max_xi3).1;
            margins.push((t_k, cfg.phi));
        }
    }
    let result = RunResult { trajectory: traj, events: log, failure, min_psi, model: Some(gp) };
    Ok(SampledRun { result, admissibility, margins })
}
