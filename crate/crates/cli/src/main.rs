use std::process::ExitCode;

use clap::Parser;
use multi_ucrl_cli::{run_experiment, Settings};

fn main() -> ExitCode {
    let cfg = match Settings::parse().resolve() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_experiment(&cfg) {
        Ok(out) => {
            let m = &out.manifest;
            println!(
                "{}: {} runs, rho* {:?}, D {:.4}, {:.2}s -> {}",
                m.env_label,
                m.runs.len(),
                m.rho_star,
                m.diameter,
                m.wall_clock_seconds,
                cfg.out.display()
            );
            for row in out.comparison.rows.iter().filter(|r| r.checkpoint == cfg.horizon) {
                println!(
                    "  {:<18} median per-agent regret {:.1} (iqr {:.1}), within bound {:.0}%",
                    row.mode.as_str(),
                    row.median_per_agent_regret,
                    row.iqr,
                    100.0 * row.bound_satisfied_fraction
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
