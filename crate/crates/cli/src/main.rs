use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracocp::runner::{cmd_export, cmd_fit_rate, cmd_run};
use fracocp::Error;

/// Adaptive finite elements for optimal control of the spectral fractional Laplacian.
#[derive(Parser)]
#[command(name = "fracocp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive loop described by an INI config file.
    Run { config: PathBuf },
    /// Slope of log(total estimator) against log(#T_Y) over the last cycles.
    FitRate {
        summary: PathBuf,
        #[arg(long, default_value_t = 5)]
        window: usize,
    },
    /// Write a VTK file for one stored cycle of a run directory.
    Export {
        rundir: PathBuf,
        #[arg(long)]
        cycle: usize,
    },
}

const THREADS_VAR: &str = "FRACOCP_THREADS";

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| format!("{THREADS_VAR}={v} is not a thread count"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Run { config } => cmd_run(&config).map(|out| {
            let last = out.records.last();
            println!(
                "{} cycles written to {}",
                out.records.len(),
                out.run_dir.display()
            );
            if let Some(r) = last {
                println!(
                    "final #T_Y = {}, total estimator = {:.6e}",
                    r.n_t_y, r.total
                );
            }
        }),
        Command::FitRate { summary, window } => {
            cmd_fit_rate(&summary, window).map(|slope| println!("{slope:.6}"))
        }
        Command::Export { rundir, cycle } => {
            cmd_export(&rundir, cycle).map(|path| println!("{}", path.display()))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config { .. }) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
