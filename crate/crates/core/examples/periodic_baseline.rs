//! Periodic model updates without the excitation rule, next to the same
//! schedule with it.

use safe_etl::config::ScenarioConfig;
use safe_etl::sim::{run_time_triggered_baseline, BaselineOptions, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = ScenarioConfig::default().setup()?;
    // long enough to pass the approach phase
    let short = RunOptions { duration: 10.0, ..s.run };
    for b in [
        BaselineOptions { period: 0.1, excite: false },
        BaselineOptions { period: 0.1, excite: true },
        BaselineOptions { period: 0.01, excite: true },
    ] {
        let r = run_time_triggered_baseline(&s.problem, &s.model, &s.bound, &s.trigger, &b, &short)?;
        match &r.failure {
            Some(f) => println!("{b:?}: infeasible at {:.3} s ({})", f.t, f.reason),
            None => println!("{b:?}: feasible for {} s, {} updates, min psi {:.4}", short.duration, r.events.len(), r.min_psi),
        }
    }
    Ok(())
}
