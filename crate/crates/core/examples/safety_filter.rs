//! Filter a few nominal inputs for the cruise-control barrier with a model
//! trained on a coarse grid.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safe_etl::config::ScenarioConfig;
use safe_etl::filter::{safety_filter, xi_terms};
use safe_etl::sim::measure;

fn main() {
    let s = ScenarioConfig::default().setup().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut gp = s.model.seed_model(&s.problem, &mut rng).unwrap();
    for i in 0..15 {
        for j in 0..43 {
            let x = [-2.0 + i as f64, 20.0 + 2.0 * j as f64];
            for u in [-9000.0, 9000.0] {
                let y = measure(&s.problem.dynamics, &x, u, s.model.sigma_on, &mut rng);
                gp.push_point(&x, u, y).unwrap();
            }
        }
    }

    let cbf = &s.problem.cbf;
    for (x, u_nom) in [([4.0, 60.0], 8000.0), ([4.0, 33.0], 20000.0), ([6.0, 36.5], 20000.0), ([2.0, 40.0], -5000.0)] {
        let xi = xi_terms(cbf, &gp, &s.bound, &x);
        match safety_filter(cbf, &gp, &s.bound, &x, u_nom) {
            Ok(d) => println!(
                "v {:5.1} z {:5.1} psi {:7.2}  u_nom {u_nom:8.0} -> u {:9.1} ({:?}, ratio {:.2}, residual {:.2e})",
                x[0] + 14.0,
                x[1],
                cbf.value(&x),
                d.u,
                d.branch,
                d.gamma_ratio,
                xi.residual(d.u)
            ),
            Err(e) => println!("x {x:?}: {e}"),
        }
    }
}
