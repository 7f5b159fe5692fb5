use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gsgd_cli::commands::{
    cmd_run, cmd_sweep, cmd_validate, counterexample, EXIT_DIVERGED, EXIT_ERROR, EXIT_OK,
};
use gsgd_cli::{CliError, ExperimentConfig};
use gsgd_core::schedules::CheckStatus;

#[derive(Parser)]
#[command(
    name = "gsgd",
    version,
    about = "Generalized SGD experiments on nonsmooth problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write run.csv, probes.csv, summary.csv, config.echo
    Run { config: PathBuf },
    /// signSGD on |2u + v| + |u + 10| with theta = 1
    Counterexample {
        #[arg(long)]
        eps0: f64,
        #[arg(long)]
        eta0: f64,
        #[arg(long = "K")]
        horizon: usize,
    },
    /// Check the schedule of a config
    Validate { config: PathBuf },
    /// Run every (seed, c) pair of the sweep block and write sweep.csv
    Sweep { config: PathBuf },
}

fn status_tag(s: CheckStatus) -> &'static str {
    match s {
        CheckStatus::Pass => "PASS",
        CheckStatus::PassSymbolic => "PASS (symbolic)",
        CheckStatus::Flag => "FLAG",
        CheckStatus::Fail => "FAIL",
    }
}

fn execute(cmd: Command) -> Result<u8, CliError> {
    match cmd {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let exp = cmd_run(&cfg)?;
            let s = &exp.summary;
            println!(
                "steps={} final_f={:.6e} final_stationarity={:.6e} out={}",
                exp.record.rows.len() - 1,
                s.final_f,
                s.final_stationarity,
                cfg.out_dir().display()
            );
            if s.diverged {
                eprintln!("run diverged: {:?}", exp.record.status);
                return Ok(EXIT_DIVERGED);
            }
            Ok(EXIT_OK)
        }
        Command::Counterexample {
            eps0,
            eta0,
            horizon,
        } => {
            let r = counterexample(eps0, eta0, horizon)?;
            println!("max |u_k - v_k|       {:e}", r.max_diagonal_gap);
            println!("max |u_k|             {:.6}", r.max_abs_u);
            println!(
                "terminal point        ({:.6e}, {:.6e})",
                r.terminal[0], r.terminal[1]
            );
            println!("terminal stationarity {:.6}", r.terminal_stationarity);
            println!("distance to (-10, 20) {:.6}", r.distance_to_minimizer);
            println!(
                "iterates {} the segment u = v, |u| <= 1",
                if r.stays_on_segment() {
                    "stay on"
                } else {
                    "leave"
                }
            );
            Ok(EXIT_OK)
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = cmd_validate(&cfg)?;
            for c in &report.checks {
                println!("{:<16} {}: {}", status_tag(c.status), c.name, c.detail);
            }
            println!("theta/eta tail: {:?}", report.ratio);
            Ok(if report.all_ok() { EXIT_OK } else { EXIT_ERROR })
        }
        Command::Sweep { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = cmd_sweep(&cfg)?;
            let diverged = rows.iter().filter(|r| r.diverged).count();
            println!(
                "{} runs ({} diverged) -> {}",
                rows.len(),
                diverged,
                cfg.out_dir().join("sweep.csv").display()
            );
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { EXIT_OK });
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
