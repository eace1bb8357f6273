use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dsg_ident::commands::{
    cmd_forward, cmd_generate, cmd_identify, cmd_table1, load_config, CliError, CliResult,
    ErrorKind, Study,
};

/// Identify the support of a uniform input distribution for an uncertain
/// scalar conservation law.
#[derive(Parser)]
#[command(name = "dsgid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve at the reference endpoints and store u(T) as observations.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve at the reference endpoints and write coefficient and grid CSVs.
    Forward {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recover the endpoints from an observation file.
    Identify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the adjoint state at the final endpoints.
        #[arg(long)]
        adjoint_grid: bool,
    },
    /// Run one of the smooth-advection parameter studies.
    Table1 {
        /// Nx, NXi, KX, KXi or delta.
        #[arg(long)]
        study: String,
        /// Replaces the built-in fixed settings of the study.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate { config, out } => {
            let report = cmd_generate(&load_config(&config)?, out.as_deref())?;
            println!("wrote {}", report.observations.display());
        }
        Command::Forward { config, out } => {
            let r = cmd_forward(&load_config(&config)?, out.as_deref())?;
            println!(
                "forward: {} steps, dt = {:.3e}, T = {}",
                r.steps, r.dt, r.final_time
            );
        }
        Command::Identify {
            config,
            data,
            out,
            adjoint_grid,
        } => {
            let s = cmd_identify(&load_config(&config)?, &data, out.as_deref(), adjoint_grid)?;
            println!(
                "converged after {} iterations: xi = [{:.6}, {:.6}] ({:.1} s)",
                s.iterations, s.xi_left, s.xi_right, s.seconds
            );
        }
        Command::Table1 { study, config, out } => {
            let study: Study = study.parse()?;
            let base = config.as_deref().map(load_config).transpose()?;
            for r in cmd_table1(study, base.as_ref(), &out)? {
                println!(
                    "{} = {}: {} it., {:.1} s, [{:.3}, {:.3}] {:?}",
                    study, r.value, r.iterations, r.seconds, r.xi_left, r.xi_right, r.status
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e
                .to_string()
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ")
                .to_string();
            eprintln!(
                "{}",
                CliError::new(ErrorKind::Config, format!("usage: {first}"))
            );
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
