use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use cbf_cli::commands::{cmd_check_cbf, cmd_reproduce, cmd_simulate, cmd_sweep, summary_line, RunReport};
use cbf_cli::CliError;

#[derive(Parser)]
#[command(
    name = "cbf",
    about = "Discrete-time CBF safety-filter simulations, diagnostics, and case-study presets",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario described by a TOML config.
    Simulate {
        config: PathBuf,
        /// Redirect outputs into this directory (overrides the config paths).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with code 2 if the run violates the safe set.
        #[arg(long)]
        strict: bool,
    },
    /// Run one of the bundled case-study presets.
    Reproduce {
        /// Preset name, e.g. sim-standard or real-penalty.
        preset: String,
        /// Output directory for the CSV/JSON artifacts.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Exit with code 2 if the run violates the safe set.
        #[arg(long)]
        strict: bool,
    },
    /// Sample barrier validity diagnostics over the config's [box].
    #[command(name = "check-cbf")]
    CheckCbf {
        config: PathBuf,
        /// Grid samples per state dimension.
        #[arg(long, default_value_t = 201)]
        grid: usize,
        /// Singularity tolerance on the Lie-derivative norm.
        #[arg(long, default_value_t = 1e-8)]
        eps: f64,
        /// Probe bound: feasibility is checked over u in [-u_max, u_max]^m.
        #[arg(long)]
        u_max: Option<f64>,
        /// Write the diagnostics JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun a config across sampling intervals and tabulate the metrics.
    Sweep {
        config: PathBuf,
        /// Comma-separated sampling intervals in seconds.
        #[arg(long, value_delimiter = ',', required = true)]
        dts: Vec<f64>,
        /// Write the CSV table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn finish_run(label: &str, report: &RunReport, strict: bool) -> ExitCode {
    println!("{}", summary_line(label, &report.metrics));
    println!(
        "wrote {} and {} in {:.3}s",
        report.csv_path.display(),
        report.json_path.display(),
        report.duration_seconds
    );
    if strict && report.metrics.violated {
        eprintln!("strict mode: safe-set violation (min_h = {})", report.metrics.min_h);
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Simulate { config, out, strict } => {
            let report = cmd_simulate(&config, out.as_deref())?;
            let label = config
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scenario".into());
            Ok(finish_run(&label, &report, strict))
        }
        Command::Reproduce { preset, out, strict } => {
            let report = cmd_reproduce(&preset, &out)?;
            Ok(finish_run(&preset, &report, strict))
        }
        Command::CheckCbf {
            config,
            grid,
            eps,
            u_max,
            out,
        } => {
            let report = cmd_check_cbf(&config, grid, eps, u_max)?;
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Other(format!("json serialization failed: {e}")))?;
            match out {
                Some(path) => {
                    std::fs::write(&path, text + "\n")?;
                    println!("wrote {}", path.display());
                }
                None => println!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, dts, out } => {
            let table = cmd_sweep(&config, &dts)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, &table)?;
                    println!("wrote {}", path.display());
                }
                None => print!("{table}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
