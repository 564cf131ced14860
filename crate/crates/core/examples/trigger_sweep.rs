//! Mean trigger count over a small grid of the decrease parameter, with
//! randomized initial and desired velocities.

use safe_etl::commands::sweep;
use safe_etl::config::{ScenarioConfig, SweepSection};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScenarioConfig {
        sweep: Some(SweepSection {
            parameter: "gamma".into(),
            values: vec![0.1, 0.5, 2.0],
            repetitions: 8,
            window: 8.0,
            perturbation: 2.0,
            noise_levels: vec![0.01],
        }),
        ..ScenarioConfig::default()
    };
    for c in sweep(&cfg, 7)? {
        println!(
            "gamma {:<5} u_GP {:8.1}  mean triggers {:6.2}  [{:.0}, {:.0}]  failures {}",
            c.value, c.u_gp, c.mean_triggers, c.p10, c.p90, c.failures
        );
    }
    Ok(())
}
