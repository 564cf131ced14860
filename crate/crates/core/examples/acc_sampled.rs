//! Zero-order-hold cruise control with a tightened, box-constrained filter at
//! a few sampling periods.

use safe_etl::config::ScenarioConfig;
use safe_etl::sim::{run_sampled, SampledOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = ScenarioConfig::default().setup()?;
    for period in [0.01, 0.001] {
        let opts = SampledOptions { period, ..SampledOptions::default() };
        let r = run_sampled(&s.problem, &s.model, &s.bound, &s.trigger, &opts, &s.run)?;
        let a = &r.admissibility;
        println!(
            "T {period}: triggers {}, min psi {:.4}, steady psi {:.4}, T_max {:?}, u_min {:.3e}",
            r.result.events.len(),
            r.result.min_psi,
            r.result.trajectory.mean_psi_after(25.0),
            a.t_max.map(|t| (t * 1e4).round() / 1e4),
            a.u_min
        );
        if let Some((t, phi)) = r.margins.last() {
            println!("  last margin update at {t:.2} s, phi {phi:.1}");
        }
    }
    Ok(())
}
