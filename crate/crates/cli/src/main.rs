use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info};

use seqflow::config::load_case;
use seqflow::driver::{run_with, SolverMode};
use seqflow::output::write_report;
use seqflow::Error;

#[derive(Parser)]
#[command(
    name = "seqflow",
    version,
    about = "Sequential implicit two-phase flow simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a case file and write the CSV report and VTK snapshots.
    Run {
        case: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_parser = ["reordered", "global", "compare"])]
        mode: Option<String>,
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
        degree: Option<u8>,
        #[arg(long)]
        block_size: Option<usize>,
    },
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config { .. } | Error::MeshLoad { .. } | Error::InvalidCell { .. }
    )
}

fn execute(cmd: Command) -> Result<(), Error> {
    let Command::Run {
        case,
        out,
        mode,
        degree,
        block_size,
    } = cmd;
    let mut c = load_case(&case)?;
    if let Some(m) = mode {
        c.mode = m
            .parse::<SolverMode>()
            .map_err(|e| Error::config("solver.mode", e))?;
    }
    if let Some(k) = degree {
        c.transport.degree = k as usize;
    }
    if let Some(nb) = block_size {
        c.transport.block_size = nb;
    }
    c.validate()?;
    let report = run_with(&c, |s| {
        if let Some(t) = &s.transport {
            info!(
                "step {:>5}  t = {:.4e} s  active {:>6}  mean it {:.3}  cycles {}",
                s.step,
                s.time,
                t.active_cells(),
                t.mean_iterations(),
                t.num_cycles
            );
        }
    })?;
    let files = write_report(&c.mesh, &report, &out)?;
    println!(
        "{} steps, {} retries, max step mass error {:.3e} (pore volume {:.6e} m^3)",
        report.steps.len(),
        report.retries,
        report.max_step_mass_error(),
        report.pore_volume
    );
    if let Some(d) = report.max_discrepancy() {
        println!("max reordered/global discrepancy {d:.3e}");
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_config_error(&e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
