//! Adaptive cruise control with event-triggered learning, default parameters.
//! Writes the trajectory to `acc_trajectory.csv` in the system temp dir.

use safe_etl::config::ScenarioConfig;
use safe_etl::sim::run_continuous;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = ScenarioConfig::default().setup()?;
    let r = run_continuous(&s.problem, &s.model, &s.bound, &s.trigger, &s.run)?;
    let tr = &r.trajectory;
    let x = tr.final_state().unwrap();
    println!("u_GP {:.1}, beta_g {:.2}", s.trigger.u_gp, s.bound.beta_g);
    println!("triggers {}, min inter-event {:.4} s", r.events.len(), r.events.min_inter_event().unwrap_or(f64::NAN));
    println!("min psi {:.4}, min ratio {:.3}", r.min_psi, tr.min_gamma());
    println!("final v {:.3}, z {:.3}", x[0] + 14.0, x[1]);
    for (t, post) in r.events.trigger_times.iter().zip(&r.events.post_ratios).take(5) {
        println!("  event at {t:.3} s, ratio after update {post:.3}");
    }

    let path = std::env::temp_dir().join("acc_trajectory.csv");
    tr.write_csv(std::fs::File::create(&path)?, &s.problem.state_labels, &s.problem.display_offset)?;
    println!("wrote {}", path.display());
    Ok(())
}
