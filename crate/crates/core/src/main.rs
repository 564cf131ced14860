use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use safe_etl::commands::{cmd_bounds, cmd_run, cmd_sweep, CliError, EXIT_CONFIG};
use safe_etl::config::{load_config, ScenarioConfig};

#[derive(Parser)]
#[command(version, about = "Safe control with event-triggered GP learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one closed-loop run
    Run(Common),
    /// Trigger counts over a parameter grid with randomized scenarios
    Sweep(Common),
    /// Report sampled-data bounds and admissibility
    Bounds(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overrides run.output_dir
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides run.seed (master seed for sweeps)
    #[arg(long)]
    seed: Option<u64>,
}

fn load(c: &Common) -> Result<(ScenarioConfig, PathBuf), CliError> {
    let mut cfg = load_config(&c.config)?;
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.run.output_dir = o.display().to_string();
    }
    let out = PathBuf::from(&cfg.run.output_dir);
    Ok((cfg, out))
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run(c) => {
            let (cfg, out) = load(&c)?;
            let (summary, code) = cmd_run(&cfg, &out)?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
            if let Some(t) = summary.t_fail {
                eprintln!("run became infeasible at t = {t:.3}");
            }
            Ok(code)
        }
        Command::Sweep(c) => {
            let (cfg, out) = load(&c)?;
            let (cells, code) = cmd_sweep(&cfg, &out, cfg.run.seed)?;
            for cell in &cells {
                println!(
                    "noise {:<6} value {:<10} mean {:>8.2}  [{:.1}, {:.1}]  failures {}",
                    cell.noise_std, cell.value, cell.mean_triggers, cell.p10, cell.p90, cell.failures
                );
            }
            Ok(code)
        }
        Command::Bounds(c) => {
            let (cfg, out) = load(&c)?;
            let (report, code) = cmd_bounds(&cfg, &out)?;
            for check in &report.checks {
                println!("{:<32} {}  {}", check.name, if check.ok { "ok  " } else { "FAIL" }, check.detail);
            }
            for v in report.violations() {
                eprintln!("violated: {v}");
            }
            Ok(code)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
