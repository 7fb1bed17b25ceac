use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rdsplit::config::{parse_config, Overrides, RunConfig};
use rdsplit::csv_io::write_error_table;
use rdsplit::diagnostics::{verify_energy_series, ErrorTableRow};
use rdsplit::experiments::{
    reproduce, run_to_dir, spatial_cauchy, temporal_convergence, ExperimentError, RunOutput,
    CAUCHY_NXS, STUDY_T_END, TEMPORAL_DTS, TEMPORAL_REF_DT, TEMPORAL_REF_NX,
};
use rdsplit::presets::preset;

/// Energy-stable operator splitting for reaction-diffusion systems.
#[derive(Parser)]
#[command(name = "rdsplit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Copy)]
struct OverrideArgs {
    /// Time step
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Grid points per side
    #[arg(long, global = true)]
    nx: Option<usize>,
    /// Final time
    #[arg(long, global = true)]
    tmax: Option<f64>,
}

impl From<OverrideArgs> for Overrides {
    fn from(a: OverrideArgs) -> Self {
        Overrides {
            dt: a.dt,
            nx: a.nx,
            tmax: a.tmax,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration file
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run a built-in preset and write its CSV output
    Reproduce {
        preset: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Convergence study on a preset
    Convergence {
        preset: String,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Temporal,
    Spatial,
}

enum Failure {
    Usage(String),
    Experiment(ExperimentError),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure::Experiment(e)
    }
}

fn out_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| {
        PathBuf::from("output").join(cfg.name.clone().unwrap_or_else(|| "run".into()))
    })
}

fn summarize(out: &Path, result: &RunOutput) {
    let last = result.reports.last().expect("at least the initial report");
    println!(
        "steps {}  t = {:.6}  energy {:.10e}  min concentration {:.3e}",
        last.step, last.time, last.energy, last.min_conc
    );
    if !verify_energy_series(&result.reports).passed() {
        println!("warning: recorded energy series is not monotone");
    }
    println!("wrote {} file(s) to {}", result.files.len(), out.display());
}

fn print_table(rows: &[ErrorTableRow]) {
    println!("{:>12} {:>12} {:>8} {:>14} {:>8} {:>9}", "dt", "h", "species", "linf_error", "order", "seconds");
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
    for r in rows {
        println!(
            "{:>12} {:>12} {:>8} {:>14.4e} {:>8} {:>9.2}",
            opt(r.dt),
            opt(r.h),
            r.species,
            r.linf_error,
            r.order.map_or("-".to_string(), |o| format!("{o:.4}")),
            r.cpu_seconds
        );
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            out,
            overrides,
        } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
            let mut cfg = parse_config(&text).map_err(ExperimentError::from)?;
            cfg.apply_overrides(&overrides.into())
                .map_err(ExperimentError::from)?;
            let dir = out_dir(&cfg, out);
            let result = run_to_dir(&cfg, &dir)?;
            summarize(&dir, &result);
        }
        Command::Reproduce {
            preset: name,
            out,
            overrides,
        } => {
            let mut cfg = preset(&name).map_err(ExperimentError::from)?;
            cfg.apply_overrides(&overrides.into())
                .map_err(ExperimentError::from)?;
            let dir = out_dir(&cfg, out);
            let result = reproduce(&cfg, &dir)?;
            summarize(&dir, &result);
        }
        Command::Convergence {
            preset: name,
            mode,
            out,
            overrides,
        } => {
            let mut cfg = preset(&name).map_err(ExperimentError::from)?;
            if cfg.domain.is_none() {
                return Err(Failure::Usage(format!(
                    "preset '{name}' has no spatial domain; use `reproduce {name}`"
                )));
            }
            cfg.t_end = overrides.tmax.unwrap_or(STUDY_T_END);
            let dir = out_dir(&cfg, out);
            let (rows, file) = match mode {
                Mode::Temporal => {
                    if let Some(d) = cfg.domain.as_mut() {
                        d.nx = overrides.nx.unwrap_or(TEMPORAL_REF_NX);
                    }
                    cfg.validate().map_err(ExperimentError::from)?;
                    let ref_dt = overrides.dt.unwrap_or(TEMPORAL_REF_DT);
                    (temporal_convergence(&cfg, ref_dt, &TEMPORAL_DTS)?, "temporal_errors.csv")
                }
                Mode::Spatial => {
                    if overrides.nx.is_some() || overrides.dt.is_some() {
                        return Err(Failure::Usage(
                            "spatial study fixes nx and dt = h^2; only --tmax applies".into(),
                        ));
                    }
                    cfg.validate().map_err(ExperimentError::from)?;
                    (spatial_cauchy(&cfg, &CAUCHY_NXS)?, "cauchy_errors.csv")
                }
            };
            print_table(&rows);
            let path = dir.join(file);
            write_error_table(&path, &rows).map_err(ExperimentError::from)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Experiment(e)) => {
            eprintln!("error: {e}");
            if e.is_assertion() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
