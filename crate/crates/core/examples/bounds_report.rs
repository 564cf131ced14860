//! Derived constants and admissibility checks for a sampled-data config.
//! Pass a config path, or run without arguments for the defaults.

use safe_etl::commands::derived_bounds;
use safe_etl::config::{load_config, ScenarioConfig};
use safe_etl::sim::SampledOptions;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = match std::env::args().nth(1) {
        Some(p) => load_config(std::path::Path::new(&p))?,
        None => ScenarioConfig { sampled: Some(SampledOptions::default()), ..ScenarioConfig::default() },
    };
    let r = derived_bounds(&cfg)?;
    println!("beta_f {:.3}, beta_g {:.3}, std floor {:.4e}", r.beta_f, r.beta_g, r.sigma_floor_g);
    println!("u_GP {:.1} (unscaled variant {:.2})", r.u_gp, r.u_gp_unscaled_variant);
    println!("L_xi {:?}, phi {:.2}", r.l_xi, r.phi);
    for c in &r.checks {
        println!("{:<30} {}  {}", c.name, if c.ok { "ok  " } else { "FAIL" }, c.detail);
    }
    Ok(())
}
