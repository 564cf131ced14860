//! `run`, `sweep` and `bounds`: run experiments from a config and write
//! CSV/JSON results.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{emit, ConfigError, Mode, ScenarioConfig, Setup};
use crate::sampled::{Admissibility, BoundConstants};
use crate::sim::{
    run_continuous, run_exact_model, run_sampled, run_time_triggered_baseline, sampled_admissibility, RunResult,
    SimError,
};
use crate::trigger::excitation_threshold_printed;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_BOUNDS: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation error: {0}")]
    Sim(#[from] SimError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Sim(_) => EXIT_INFEASIBLE,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_file(path, &serde_json::to_string_pretty(value).expect("serializable"))
}

fn create(path: &Path) -> Result<fs::File, CliError> {
    fs::File::create(path).map_err(io_err(path))
}

/// Result of one configured run.
#[derive(Debug, Clone)]
pub struct Execution {
    pub result: RunResult,
    pub admissibility: Option<Admissibility>,
    pub margins: Vec<(f64, f64)>,
}

pub fn execute(mode: Mode, setup: &Setup) -> Result<Execution, SimError> {
    let s = setup;
    Ok(match mode {
        Mode::Continuous => Execution {
            result: run_continuous(&s.problem, &s.model, &s.bound, &s.trigger, &s.run)?,
            admissibility: None,
            margins: vec![],
        },
        Mode::ExactModel => Execution { result: run_exact_model(&s.problem, &s.run)?, admissibility: None, margins: vec![] },
        Mode::Baseline => Execution {
            result: run_time_triggered_baseline(&s.problem, &s.model, &s.bound, &s.trigger, &s.baseline, &s.run)?,
            admissibility: None,
            margins: vec![],
        },
        Mode::Sampled => {
            let r = run_sampled(&s.problem, &s.model, &s.bound, &s.trigger, &s.sampled, &s.run)?;
            Execution { result: r.result, admissibility: Some(r.admissibility), margins: r.margins }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub failed: bool,
    pub t_fail: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub seed: u64,
    pub trigger_count: usize,
    pub min_inter_event: Option<f64>,
    pub mean_inter_event: Option<f64>,
    pub final_time: f64,
    /// Final state in output coordinates.
    pub final_state: Vec<f64>,
    pub min_psi: f64,
    pub min_gamma: f64,
    pub min_post_update_ratio: Option<f64>,
    /// Mean psi over the last five seconds.
    pub steady_state_psi: f64,
    pub failed: bool,
    pub t_fail: Option<f64>,
    pub u_gp: f64,
    pub beta_f: f64,
    pub beta_g: f64,
    pub sigma_floor_g: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub admissibility: Option<Admissibility>,
}

pub fn summarize(mode: Mode, setup: &Setup, exec: &Execution) -> RunSummary {
    let r = &exec.result;
    let tr = &r.trajectory;
    let final_time = tr.times.last().copied().unwrap_or(0.0);
    let final_state = tr
        .final_state()
        .map(|x| x.iter().zip(&setup.problem.display_offset).map(|(a, b)| a + b).collect())
        .unwrap_or_default();
    RunSummary {
        mode,
        seed: setup.run.seed,
        trigger_count: r.events.len(),
        min_inter_event: r.events.min_inter_event(),
        mean_inter_event: r.events.mean_inter_event(),
        final_time,
        final_state,
        min_psi: r.min_psi,
        min_gamma: tr.min_gamma(),
        min_post_update_ratio: r.events.post_ratios.iter().copied().reduce(f64::min),
        steady_state_psi: tr.mean_psi_after(final_time - 5.0),
        failed: r.failed(),
        t_fail: r.failure.as_ref().map(|f| f.t),
        u_gp: setup.trigger.u_gp,
        beta_f: setup.bound.beta_f,
        beta_g: setup.bound.beta_g,
        sigma_floor_g: setup.bound.sigma_floor_g,
        admissibility: exec.admissibility,
    }
}

fn prepare_out(out: &Path, cfg: &ScenarioConfig) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_file(&out.join("effective_config.toml"), &emit(cfg))
}

/// Run the configured mode; writes `trajectory.csv`, `events.csv`,
/// `summary.json` and, on failure or in baseline mode, `failure.json`.
/// Returns the summary and the exit code.
pub fn cmd_run(cfg: &ScenarioConfig, out: &Path) -> Result<(RunSummary, i32), CliError> {
    let setup = cfg.setup()?;
    prepare_out(out, cfg)?;
    let exec = execute(cfg.mode, &setup)?;
    if let Some(a) = &exec.admissibility {
        if !a.input_bound_ok {
            eprintln!(
                "warning: input bound {} is below the minimum input bound {:.4e}; running anyway",
                setup.sampled.u_bar, a.u_min
            );
        }
        if !a.sampling_time_ok {
            eprintln!("warning: sampling time {} exceeds the admissible {:?}", setup.sampled.period, a.t_max);
        }
    }
    let r = &exec.result;
    r.trajectory.write_csv(
        create(&out.join("trajectory.csv"))?,
        &setup.problem.state_labels,
        &setup.problem.display_offset,
    )?;
    r.events.write_csv(create(&out.join("events.csv"))?)?;
    if !exec.margins.is_empty() {
        let mut w = csv::Writer::from_writer(create(&out.join("margins.csv"))?);
        w.write_record(["t", "phi"])?;
        for (t, p) in &exec.margins {
            w.write_record([t.to_string(), p.to_string()])?;
        }
        w.flush().map_err(io_err(out))?;
    }
    let summary = summarize(cfg.mode, &setup, &exec);
    write_json(&out.join("summary.json"), &summary)?;
    if r.failed() || cfg.mode == Mode::Baseline {
        let report = FailureReport {
            failed: r.failed(),
            t_fail: r.failure.as_ref().map(|f| f.t),
            reason: r.failure.as_ref().map(|f| f.reason.clone()),
        };
        write_json(&out.join("failure.json"), &report)?;
    }
    let code = if r.failed() { EXIT_INFEASIBLE } else { EXIT_OK };
    Ok((summary, code))
}

/// Empirical quantile with linear interpolation.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub repetition: usize,
    pub seed: u64,
    pub trigger_count: usize,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub noise_std: f64,
    pub value: f64,
    pub u_gp: f64,
    pub mean_triggers: f64,
    pub p10: f64,
    pub p90: f64,
    pub failures: usize,
    pub runs: Vec<SweepRun>,
}

/// Configuration of one randomized repetition.
fn perturbed(base: &ScenarioConfig, half_width: f64, window: f64, rng: &mut ChaCha8Rng) -> ScenarioConfig {
    let mut c = base.clone();
    let mut d = || if half_width > 0.0 { rng.random_range(-half_width..=half_width) } else { 0.0 };
    c.scenario.v0 += d();
    c.scenario.vd += d();
    c.scenario.v_init += d();
    c.scenario.z_init += d();
    c.run.duration = window;
    c
}

/// Trigger counts over the sweep grid; repetitions run in parallel, each with
/// its own random stream derived from `master_seed`.
pub fn sweep(cfg: &ScenarioConfig, master_seed: u64) -> Result<Vec<SweepCell>, CliError> {
    let sw = cfg.sweep.clone().ok_or_else(|| ConfigError::Invalid {
        key: "sweep".into(),
        reason: "the sweep command needs a [sweep] section".into(),
    })?;
    let noise = if sw.noise_levels.is_empty() { vec![cfg.gp.noise_std] } else { sw.noise_levels.clone() };
    let mut cells = Vec::new();
    for (ni, &sigma) in noise.iter().enumerate() {
        for (vi, &value) in sw.values.iter().enumerate() {
            let mut base = cfg.clone();
            base.gp.noise_std = sigma;
            base.apply_parameter(&sw.parameter, value)?;
            base.validate()?;
            let u_gp = base.setup()?.trigger.u_gp;
            let cell_index = (ni * sw.values.len() + vi) as u64;
            let runs: Vec<SweepRun> = (0..sw.repetitions)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
                    rng.set_stream(cell_index * sw.repetitions as u64 + rep as u64);
                    let mut c = perturbed(&base, sw.perturbation, sw.window, &mut rng);
                    c.run.seed = rng.next_u64();
                    let outcome = c
                        .setup()
                        .map_err(CliError::from)
                        .and_then(|s| execute(c.mode, &s).map_err(CliError::from));
                    match outcome {
                        Ok(e) => SweepRun {
                            repetition: rep,
                            seed: c.run.seed,
                            trigger_count: e.result.events.count_before(sw.window + 1e-9),
                            failed: e.result.failed(),
                        },
                        Err(_) => SweepRun { repetition: rep, seed: c.run.seed, trigger_count: 0, failed: true },
                    }
                })
                .collect();
            let counts: Vec<f64> = runs.iter().filter(|r| !r.failed).map(|r| r.trigger_count as f64).collect();
            cells.push(SweepCell {
                noise_std: sigma,
                value,
                u_gp,
                mean_triggers: if counts.is_empty() { f64::NAN } else { counts.iter().sum::<f64>() / counts.len() as f64 },
                p10: quantile(&counts, 0.1),
                p90: quantile(&counts, 0.9),
                failures: runs.iter().filter(|r| r.failed).count(),
                runs,
            });
        }
    }
    Ok(cells)
}

/// Writes `sweep.csv` plus one `cells/cell_<i>.csv` per grid cell.
pub fn cmd_sweep(cfg: &ScenarioConfig, out: &Path, master_seed: u64) -> Result<(Vec<SweepCell>, i32), CliError> {
    prepare_out(out, cfg)?;
    let cells = sweep(cfg, master_seed)?;
    let param = cfg.sweep.as_ref().map(|s| s.parameter.clone()).unwrap_or_default();
    let cell_dir = out.join("cells");
    fs::create_dir_all(&cell_dir).map_err(io_err(&cell_dir))?;
    let mut w = csv::Writer::from_writer(create(&out.join("sweep.csv"))?);
    w.write_record(["noise_std", param.as_str(), "u_gp", "mean_triggers", "p10", "p90", "failures"])?;
    for (i, c) in cells.iter().enumerate() {
        w.write_record([
            c.noise_std.to_string(),
            c.value.to_string(),
            c.u_gp.to_string(),
            c.mean_triggers.to_string(),
            c.p10.to_string(),
            c.p90.to_string(),
            c.failures.to_string(),
        ])?;
        let path: PathBuf = cell_dir.join(format!("cell_{i}.csv"));
        let mut cw = csv::Writer::from_writer(create(&path)?);
        cw.write_record(["repetition", "seed", "triggers", "failed"])?;
        for r in &c.runs {
            cw.write_record([
                r.repetition.to_string(),
                r.seed.to_string(),
                r.trigger_count.to_string(),
                u8::from(r.failed).to_string(),
            ])?;
        }
        cw.flush().map_err(io_err(&path))?;
    }
    w.flush().map_err(io_err(out))?;
    Ok((cells, EXIT_OK))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub beta_f: f64,
    pub beta_g: f64,
    pub sigma_floor_g: f64,
    pub u_gp: f64,
    /// Threshold formula without the `1/s_g²` factor, for comparison.
    pub u_gp_unscaled_variant: f64,
    pub l_xi: [f64; 3],
    pub phi: f64,
    pub phi_tilde: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    pub period: f64,
    pub t_max: Option<f64>,
    pub u_bar: f64,
    pub u_min: f64,
    pub max_xi3: f64,
    pub constants: BoundConstants,
    pub checks: Vec<Check>,
}

impl BoundsReport {
    pub fn violations(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.ok).map(|c| c.name.as_str()).collect()
    }
}

/// Derived bounds for the initial model of the configured scenario.
pub fn derived_bounds(cfg: &ScenarioConfig) -> Result<BoundsReport, CliError> {
    let sopts = cfg.sampled.ok_or_else(|| ConfigError::Invalid {
        key: "sampled".into(),
        reason: "the bounds command needs a [sampled] section".into(),
    })?;
    let s = cfg.setup()?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.run.seed);
    let gp = s.model.seed_model(&s.problem, &mut rng).map_err(SimError::from)?;
    let (consts, sc, adm) = sampled_admissibility(&s.problem, &gp, &s.bound, &s.trigger, &sopts).map_err(|e| {
        ConfigError::Invalid { key: "bounds.domain_lower".into(), reason: e.to_string() }
    })?;
    let t = &s.trigger;
    let floor_ok = t.floor_condition_holds(s.bound.beta_g);
    let checks = vec![
        Check {
            name: "sampling time".into(),
            ok: adm.sampling_time_ok,
            detail: match adm.t_max {
                Some(t) => format!("T = {} against T_max = {t:.6}", sc.period),
                None => format!("T = {}, no admissible sampling time", sc.period),
            },
        },
        Check {
            name: "minimum input bound".into(),
            ok: adm.input_bound_ok,
            detail: format!("u_bar = {} must exceed {:.6e}", sc.u_bar, adm.input_quotient),
        },
        Check {
            name: "excitation within input bound".into(),
            ok: adm.excitation_fits_box,
            detail: format!("u_gp = {:.4} against u_bar = {}", t.u_gp, sc.u_bar),
        },
        Check {
            name: "small-gradient condition".into(),
            ok: adm.small_gradient_condition_ok,
            detail: format!("{} grid nodes with |grad(psi)'b| <= zeta1", adm.small_gradient_nodes),
        },
        Check {
            name: "std floor condition".into(),
            ok: floor_ok,
            detail: format!("sqrt(beta_g) * floor = {:.6e}", s.bound.beta_g.sqrt() * s.bound.sigma_floor_g),
        },
    ];
    Ok(BoundsReport {
        beta_f: s.bound.beta_f,
        beta_g: s.bound.beta_g,
        sigma_floor_g: s.bound.sigma_floor_g,
        u_gp: t.u_gp,
        u_gp_unscaled_variant: excitation_threshold_printed(
            t.epsilon,
            t.gamma,
            s.bound.beta_g,
            cfg.gp.signal_std_g,
            cfg.gp.signal_std_f,
            cfg.gp.noise_std,
            t.g_lower,
        ),
        l_xi: sc.l_xi,
        phi: sc.phi,
        phi_tilde: sc.phi_tilde,
        zeta1: sc.zeta1,
        zeta2: sc.zeta2,
        period: sc.period,
        t_max: adm.t_max,
        u_bar: sc.u_bar,
        u_min: adm.u_min,
        max_xi3: sc.max_xi3_over_safe_set,
        constants: consts,
        checks,
    })
}

/// Writes `derived_bounds.json`; exit code 4 when an inequality fails.
pub fn cmd_bounds(cfg: &ScenarioConfig, out: &Path) -> Result<(BoundsReport, i32), CliError> {
    prepare_out(out, cfg)?;
    let report = derived_bounds(cfg)?;
    write_json(&out.join("derived_bounds.json"), &report)?;
    let code = if report.violations().is_empty() { EXIT_OK } else { EXIT_BOUNDS };
    Ok((report, code))
}
