use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pairwell::config::{AnalyticOptions, Mode, Scenario};
use pairwell::scenario::write_levels;
use pairwell::{run_config_file, RunError};
use pairwell_core::{WellParams, SPEED_OF_LIGHT};

#[derive(Parser)]
#[command(
    name = "pairwell",
    version,
    about = "Pair creation in a Sauter-type potential well"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a TOML scenario and write its tables plus manifest.json.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long, env = "PAIRWELL_THREADS")]
        threads: Option<usize>,
    },
    /// Print the analytic levels of a sharp well to stdout.
    Levels {
        /// Barrier height (c²).
        #[arg(long, allow_negative_numbers = true)]
        v1: f64,
        /// Well depth (c²).
        #[arg(long, allow_negative_numbers = true)]
        v2: f64,
        /// Well width (a.u.).
        #[arg(long)]
        d: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            threads,
        } => {
            if let Some(n) = threads {
                if n == 0 {
                    eprintln!("error: --threads must be at least 1");
                    return ExitCode::from(1);
                }
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                {
                    eprintln!("error: thread pool: {e}");
                    return ExitCode::from(2);
                }
            }
            run_config_file(&config, &out).map(|m| {
                eprintln!(
                    "{}: {} files in {} ({:.2} s)",
                    m.mode,
                    m.outputs.len(),
                    out.display(),
                    m.wall_time_s
                );
            })
        }
        Command::Levels { v1, v2, d } => WellParams::new(v1, v2, 0.0, d, SPEED_OF_LIGHT)
            .map_err(RunError::from)
            .and_then(|well| {
                let s = Scenario {
                    mode: Mode::AnalyticLevels,
                    well,
                    grid: None,
                    propagation: None,
                    analytic: AnalyticOptions::default(),
                    sweep_v2: Vec::new(),
                    compare: None,
                };
                write_levels(&s, std::io::stdout().lock())
            }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
