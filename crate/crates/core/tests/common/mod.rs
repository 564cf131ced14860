#![allow(dead_code)]

use std::path::PathBuf;

use safe_etl::config::{load_config, ScenarioConfig, Setup};
use safe_etl::sim::{RunResult, Trajectory};
use safe_etl::trigger::{estimate_ratio_lipschitz, EventLog};

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

pub fn shipped(name: &str) -> ScenarioConfig {
    load_config(&config_path(name)).expect("shipped config loads")
}

pub fn setup_of(cfg: &ScenarioConfig) -> Setup {
    cfg.setup().expect("valid setup")
}

pub fn scratch_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("safe-etl-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Post-update ratio and safe-direction checks over every event.
pub fn event_violations(log: &EventLog, target: f64) -> Vec<String> {
    let mut bad = Vec::new();
    for i in 0..log.len() {
        if log.post_ratios[i] < target - 1e-6 {
            bad.push(format!("t = {}: post ratio {}", log.trigger_times[i], log.post_ratios[i]));
        }
        let s = log.xi_s[i];
        if s * log.applied_inputs[i] > s * log.filtered_inputs[i] {
            bad.push(format!("t = {}: excitation moved against the constraint", log.trigger_times[i]));
        }
    }
    bad
}

/// Ratio slope bound estimated from the logged trajectory, ignoring steps
/// across model updates.
pub fn ratio_lipschitz(tr: &Trajectory) -> f64 {
    estimate_ratio_lipschitz(&tr.times, &tr.gamma_ratios, &tr.event_flags)
}

/// `(min inter-event time, gamma / L)` for a run.
pub fn zeno_margin(r: &RunResult, gamma: f64) -> Option<(f64, f64)> {
    let dt = r.events.min_inter_event()?;
    Some((dt, gamma / ratio_lipschitz(&r.trajectory)))
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safe_etl::filter::{safety_filter, xi_terms, XiTerms};
use safe_etl::gp::CompositeGp;
use safe_etl::sampled::sampled_safety_filter;
use safe_etl::sim::sampled_config_for;

/// ACC model with data spread over the domain so the closed form is certified everywhere.
pub fn well_trained_model(s: &Setup, seed: u64) -> CompositeGp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gp = s.model.seed_model(&s.problem, &mut rng).unwrap();
    let (lo, hi) = (&s.problem.domain.0, &s.problem.domain.1);
    let (ni, nj) = (15, 43);
    for i in 0..ni {
        for j in 0..nj {
            let x = [
                lo[0] + (hi[0] - lo[0]) * i as f64 / (ni - 1) as f64,
                lo[1] + (hi[1] - lo[1]) * j as f64 / (nj - 1) as f64,
            ];
            let u = if (i + j) % 2 == 0 { 9000.0 } else { -9000.0 };
            let y = safe_etl::sim::measure(&s.problem.dynamics, &x, u, s.model.sigma_on, &mut rng);
            gp.push_point(&x, u, y).unwrap();
        }
    }
    gp
}

/// Closest feasible grid point to `u_nom` on `n + 1` points of `[lo, hi]`.
pub fn grid_argmin(xi: &XiTerms, u_nom: f64, lo: f64, hi: f64, n: usize) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..=n {
        let u = lo + (hi - lo) * i as f64 / n as f64;
        if xi.residual(u) <= 1e-9 * (1.0 + xi.xi3.abs()) && best.is_none_or(|b| (u - u_nom).abs() < (b - u_nom).abs()) {
            best = Some(u);
        }
    }
    best
}

/// Probes the continuous and box-constrained filters against a grid search.
/// States where the model does not certify the closed form are drawn again.
/// Returns `(redrawn states, continuous mismatches, sampled mismatches)`.
pub fn filter_optimality_probes(probes: usize, seed: u64) -> (usize, usize, usize) {
    let cfg = shipped("acc_sampled.cfg");
    let s = setup_of(&cfg);
    let gp = well_trained_model(&s, seed);
    let (_, sc) = sampled_config_for(&s.problem, &gp, &s.bound, &s.sampled, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let (lo, hi) = (&s.problem.domain.0, &s.problem.domain.1);
    let n = 200_000;
    let (mut bad_c, mut bad_s, mut redrawn) = (0, 0, 0);
    let mut done = 0;
    while done < probes {
        let x = [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])];
        let u_nom = rng.random_range(-30_000.0..30_000.0);
        let xi = xi_terms(&s.problem.cbf, &gp, &s.bound, &x);
        let Ok(d) = safety_filter(&s.problem.cbf, &gp, &s.bound, &x, u_nom) else {
            redrawn += 1;
            continue;
        };
        done += 1;
        let reach = xi.xi3.abs() / (xi.xi2.abs() - xi.xi1);
        let span = 2.0 * (u_nom.abs() + reach) + 1.0;
        let ok = match grid_argmin(&xi, u_nom, -span, span, n) {
            Some(b) => xi.residual(d.u) <= 1e-9 * (1.0 + xi.xi3.abs())
                && (d.u - u_nom).abs() <= (b - u_nom).abs() + 2.0 * span / n as f64,
            None => false,
        };
        bad_c += usize::from(!ok);

        let tight = xi.tightened(sc.tightening());
        let ok = match (sampled_safety_filter(&s.problem.cbf, &gp, &s.bound, &sc, &x, u_nom), grid_argmin(&tight, u_nom, -sc.u_bar, sc.u_bar, n)) {
            (Ok(d), Some(b)) => d.u.abs() <= sc.u_bar
                && tight.residual(d.u) <= 1e-9 * (1.0 + tight.xi3.abs())
                && (d.u - u_nom).abs() <= (b - u_nom).abs() + 2.0 * sc.u_bar / n as f64,
            (Err(_), None) => true,
            _ => false,
        };
        bad_s += usize::from(!ok);
    }
    (redrawn, bad_c, bad_s)
}

// ---- GP oracles

use nalgebra::{DMatrix, DVector};
use rand_distr::StandardNormal;
use safe_etl::filter::resolve_abs_constraint;
use safe_etl::gp::{beta_scaling, composite_gram, Component, ErrorBoundConfig, SquaredExponentialKernel, TrainingSet};

pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, zero_inputs: bool) -> TrainingSet {
    let mut d = TrainingSet::empty(rng.random_range(0.01..0.3));
    for _ in 0..n {
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let u = if zero_inputs { 0.0 } else { rng.random_range(-4.0..4.0) };
        d.push(&x, u, rng.random_range(-2.0..2.0));
    }
    d
}

/// Posterior through an explicit inverse of the noisy Gram matrix.
pub fn dense_posterior(
    d: &TrainingSet,
    kf: &SquaredExponentialKernel,
    kg: &SquaredExponentialKernel,
    x: &[f64],
) -> [f64; 4] {
    let n = d.len();
    let mut k = composite_gram(d, kf, kg);
    for i in 0..n {
        k[(i, i)] += d.noise_std * d.noise_std;
    }
    let inv = k.try_inverse().expect("invertible");
    let y = DVector::from_column_slice(&d.targets);
    let cf = DVector::from_iterator(n, d.states.iter().map(|s| kf.eval(x, s)));
    let cg = DVector::from_iterator(n, d.states.iter().zip(&d.inputs).map(|(s, u)| kg.eval(x, s) * u));
    [
        (cf.transpose() * &inv * &y)[0],
        kf.eval(x, x) - (cf.transpose() * &inv * &cf)[0],
        (cg.transpose() * &inv * &y)[0],
        kg.eval(x, x) - (cg.transpose() * &inv * &cg)[0],
    ]
}

/// Largest deviation from the dense oracle over random datasets of at most 12 points.
pub fn dense_oracle_max_error(datasets: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..datasets {
        let n = rng.random_range(1..=12);
        let kf = SquaredExponentialKernel::isotropic(rng.random_range(0.3..2.0), rng.random_range(0.5..2.0), 2);
        let kg = SquaredExponentialKernel::isotropic(rng.random_range(0.1..1.0), rng.random_range(0.5..3.0), 2);
        let d = random_dataset(&mut rng, n, false);
        let gp = CompositeGp::new(kf.clone(), kg.clone(), d.clone()).unwrap();
        for _ in 0..5 {
            let q = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
            let want = dense_posterior(&d, &kf, &kg, &q);
            let (mf, vf) = gp.posterior_f(&q);
            let (mg, vg) = gp.posterior_g(&q);
            for (got, w) in [mf, vf, mg, vg].iter().zip(want) {
                worst = worst.max((got - w).abs());
            }
        }
    }
    worst
}

/// Whether data taken with zero input leaves the gain posterior exactly at the prior.
pub fn zero_input_blind(seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kf = SquaredExponentialKernel::isotropic(1.0, 1.0, 2);
    let kg = SquaredExponentialKernel::isotropic(0.7, 2.0, 2);
    let gp = CompositeGp::new(kf, kg, random_dataset(&mut rng, 10, true)).unwrap();
    (0..20).all(|_| {
        let q = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        gp.posterior_g(&q) == (0.0, 0.7 * 0.7)
    })
}

/// Fraction of prior draws for which the bound holds jointly over a test grid.
pub fn calibration(beta_override: Option<f64>, trials: usize, seed: u64) -> (usize, f64) {
    let bcfg = ErrorBoundConfig {
        delta: 0.05,
        tau_f: 1e-3,
        tau_g: 1e-3,
        domain_lower: vec![0.0],
        domain_upper: vec![10.0],
        sigma_floor_f: 1e-9,
        sigma_floor_g: 1e-9,
    };
    let beta = beta_override.unwrap_or_else(|| beta_scaling(&bcfg, Component::F, 1).unwrap());
    let kf = SquaredExponentialKernel::isotropic(1.0, 1.0, 1);
    let kg = SquaredExponentialKernel::isotropic(0.5, 2.0, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ok = 0;
    for _ in 0..trials {
        let n_data = 15;
        let test: Vec<f64> = (0..40).map(|i| 0.25 * i as f64).collect();
        let data_x: Vec<f64> = (0..n_data).map(|_| rng.random_range(0.0..10.0)).collect();
        let pts: Vec<f64> = data_x.iter().chain(&test).copied().collect();
        let m = pts.len();
        let draw = |k: &SquaredExponentialKernel, rng: &mut ChaCha8Rng| {
            let mut c = DMatrix::from_fn(m, m, |i, j| k.eval(&[pts[i]], &[pts[j]]));
            for i in 0..m {
                c[(i, i)] += 1e-9 * k.signal_variance;
            }
            let l = c.cholesky().expect("psd").unpack();
            let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            l * z
        };
        let f = draw(&kf, &mut rng);
        let g = draw(&kg, &mut rng);
        let mut d = TrainingSet::empty(0.1);
        for i in 0..n_data {
            let u = rng.random_range(-3.0..3.0);
            let w: f64 = 0.1 * rng.sample::<f64, _>(StandardNormal);
            d.push(&[pts[i]], u, f[i] + g[i] * u + w);
        }
        let gp = CompositeGp::new(kf.clone(), kg.clone(), d).unwrap();
        let s = beta.sqrt();
        let holds = (0..test.len()).all(|j| {
            let q = [test[j]];
            let (mf, vf) = gp.posterior_f(&q);
            let (mg, vg) = gp.posterior_g(&q);
            (mf - f[n_data + j]).abs() <= s * vf.sqrt() && (mg - g[n_data + j]).abs() <= s * vg.sqrt()
        });
        ok += usize::from(holds);
    }
    (ok, beta)
}

/// `(cells, mismatches)` of the absolute-value resolution against direct
/// evaluation on a dyadic grid, so every comparison is exact.
pub fn abs_constraint_grid() -> (usize, usize) {
    let mut mismatches = 0;
    let mut cells = 0;
    for a in 0..=20 {
        let c1 = 0.25 * a as f64;
        for b in -40..=40 {
            let c2 = 0.25 * b as f64;
            if c1 >= c2.abs() {
                continue;
            }
            for c in -20..=20 {
                let c3 = 0.5 * c as f64;
                let k = resolve_abs_constraint(c1, c2, c3).unwrap();
                cells += 1;
                for i in 0..=400 {
                    let u = (i - 200) as f64 / 16.0;
                    mismatches += usize::from((c1 * u.abs() + c2 * u <= c3) != (k * u <= c3));
                }
            }
        }
    }
    (cells, mismatches)
}
