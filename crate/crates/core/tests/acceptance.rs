//! Reproduction checks for the ACC study. Prints one line per criterion and
//! exits nonzero if a criterion fails that is not listed in `KNOWN_UNMET`.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{event_violations, setup_of, shipped, zeno_margin};
use safe_etl::sim::{run_continuous, run_sampled, run_time_triggered_baseline, RunResult};

/// Criteria whose reference values the implementation does not reach with the
/// shipped parameters.
const KNOWN_UNMET: [usize; 2] = [4, 5];

const SEEDS: u64 = 20;

struct Report {
    lines: Vec<(usize, bool, String)>,
}

impl Report {
    fn check(&mut self, id: usize, ok: bool, detail: String) {
        let tag = match (ok, KNOWN_UNMET.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {id:>2}: {tag:<12} {detail}");
        self.lines.push((id, ok, detail));
    }

    fn unexpected(&self) -> Vec<usize> {
        self.lines.iter().filter(|(id, ok, _)| !ok && !KNOWN_UNMET.contains(id)).map(|l| l.0).collect()
    }
}

fn steady_psi(r: &RunResult, duration: f64) -> f64 {
    r.trajectory.mean_psi_after(duration - 5.0)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn main() -> ExitCode {
    let mut rep = Report { lines: Vec::new() };
    let cfg = shipped("acc_continuous.cfg");
    let s = setup_of(&cfg);
    let gamma = s.trigger.gamma;
    let target = s.trigger.post_update_target();
    let mut accepted: Vec<RunResult> = Vec::new();

    // 1 and 2: nominal run
    let clock = Instant::now();
    let nominal = run_continuous(&s.problem, &s.model, &s.bound, &s.trigger, &s.run).expect("nominal run");
    let elapsed = clock.elapsed().as_secs_f64();
    let last = nominal.trajectory.final_state().unwrap().to_vec();
    let (v_end, z_end) = (last[0] + cfg.scenario.v0, last[1]);
    let ok = nominal.failure.is_none()
        && nominal.min_psi >= -1e-6
        && (z_end - 25.2).abs() <= 2.0
        && (v_end - cfg.scenario.v0).abs() <= 0.5
        && elapsed < 30.0;
    rep.check(
        1,
        ok,
        format!("min psi {:.4}, final v {v_end:.4}, z {z_end:.3}, runtime {elapsed:.2} s", nominal.min_psi),
    );

    let n_nominal = nominal.events.len();
    let mut counts = Vec::new();
    for seed in 0..SEEDS {
        let mut opts = s.run;
        opts.seed = seed;
        let r = run_continuous(&s.problem, &s.model, &s.bound, &s.trigger, &opts).expect("seeded run");
        if r.failure.is_none() {
            counts.push(r.events.len() as f64);
            accepted.push(r);
        }
    }
    let med = median(counts.clone());
    let ok = (76..=156).contains(&n_nominal) && counts.len() == SEEDS as usize && (med - 116.0).abs() <= 0.35 * 116.0;
    rep.check(
        2,
        ok,
        format!("N_tr {n_nominal}, median over {} seeds {med:.1} (range {:.0}..{:.0})", counts.len(), counts.iter().cloned().fold(f64::INFINITY, f64::min), counts.iter().cloned().fold(0.0, f64::max)),
    );
    let psi_cont = steady_psi(&nominal, s.run.duration);
    accepted.push(nominal);
    let continuous_runs = accepted.len();

    // 3: periodic updates without excitation
    let bs = setup_of(&shipped("acc_baseline.cfg"));
    let base = run_time_triggered_baseline(&bs.problem, &bs.model, &bs.bound, &bs.trigger, &bs.baseline, &bs.run)
        .expect("baseline run");
    let t_fail = base.failure.as_ref().map(|f| f.t);
    rep.check(
        3,
        t_fail.is_some_and(|t| (4.0..=8.0).contains(&t)),
        match t_fail {
            Some(t) => format!("infeasible at t = {t:.3} s (period {} s)", bs.baseline.period),
            None => "baseline stayed feasible".into(),
        },
    );

    // 4: sampled-data runs
    let mut sampled = Vec::new();
    for name in ["acc_sampled.cfg", "acc_sampled_t1e-3.cfg", "acc_sampled_t1e-4.cfg"] {
        let ss = setup_of(&shipped(name));
        let r = run_sampled(&ss.problem, &ss.model, &ss.bound, &ss.trigger, &ss.sampled, &ss.run).expect("sampled run");
        sampled.push((ss.sampled.period, r.result.events.len(), steady_psi(&r.result, ss.run.duration), r.result.failed()));
        if !r.result.failed() {
            accepted.push(r.result);
        }
    }
    let (_, n_s, psi_s, failed_s) = sampled[0];
    let gaps: Vec<f64> = sampled.iter().map(|c| c.2 - psi_cont).collect();
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]) && gaps.iter().all(|g| *g > 0.0);
    let ok = !sampled.iter().any(|c| c.3) && (50..=105).contains(&n_s) && psi_s > psi_cont && monotone;
    let sweep: Vec<String> = sampled.iter().map(|(t, n, p, _)| format!("T {t}: N_tr {n}, psi_ss {p:.4}")).collect();
    rep.check(
        4,
        ok,
        format!("{} (continuous psi_ss {psi_cont:.4}); count band 50..105, psi_ss monotone {monotone}, failed {failed_s}", sweep.join("; ")),
    );

    // 5: excitation magnitude
    let u_gp = s.trigger.u_gp;
    rep.check(5, (u_gp - 1966.6).abs() <= 0.01 * 1966.6, format!("u_GP {u_gp:.1} vs 1966.6 (beta_g {:.3})", s.bound.beta_g));

    // 6: absolute-value constraint resolution
    let (cells, mismatches) = common::abs_constraint_grid();
    rep.check(6, cells >= 10_000 && mismatches == 0, format!("{cells} cells x 401 inputs, {mismatches} mismatches"));

    // 7: posterior against dense inverse
    let worst = common::dense_oracle_max_error(100, 11);
    let blind = common::zero_input_blind(5);
    rep.check(7, worst <= 1e-8 && blind, format!("max deviation {worst:.2e}, zero-input data leaves gain prior exact: {blind}"));

    // 8: calibration of the error bound
    let trials = 200;
    let (held, beta) = common::calibration(None, trials, 21);
    let need = 0.95 * trials as f64 - 2.0 * (trials as f64 * 0.95 * 0.05).sqrt();
    rep.check(8, held as f64 >= need, format!("{held}/{trials} joint coverage, need {need:.1}, beta {beta:.2}"));

    // 9: post-update ratio and safe direction in every event
    let events: usize = accepted.iter().map(|r| r.events.len()).sum();
    let bad: Vec<String> = accepted.iter().flat_map(|r| event_violations(&r.events, target)).collect();
    rep.check(
        9,
        bad.is_empty(),
        format!("{events} events over {} runs, {} violations{}", accepted.len(), bad.len(), bad.first().map(|b| format!(", first: {b}")).unwrap_or_default()),
    );

    // 10: inter-event spacing for the continuous trigger
    let mut worst_ratio = f64::INFINITY;
    let mut min_dt = f64::INFINITY;
    for r in &accepted[..continuous_runs] {
        if let Some((dt, bound)) = zeno_margin(r, gamma) {
            min_dt = min_dt.min(dt);
            worst_ratio = worst_ratio.min(dt / bound);
        }
    }
    rep.check(
        10,
        min_dt > 0.0 && worst_ratio >= 0.95,
        format!("min inter-event time {min_dt:.4} s, smallest ratio to gamma/L {worst_ratio:.3}"),
    );

    // 11: closed forms against grid search
    let (redrawn, bad_c, bad_s) = common::filter_optimality_probes(500, 31);
    rep.check(
        11,
        bad_c == 0 && bad_s == 0,
        format!("500 probes, mismatches continuous {bad_c}, sampled {bad_s} ({redrawn} uncertified states redrawn)"),
    );

    let unexpected = rep.unexpected();
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
