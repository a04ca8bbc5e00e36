use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fnlse::config::{load_config, Mode, RunConfig};
use fnlse::io::emit_plot_data;
use fnlse::runner;
use fnlse::Error;

/// Ground states and dynamics of the rotating space-fractional NLS.
#[derive(Debug, Parser)]
#[command(name = "fnlse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "FNLSE_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `[output].dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute a ground state by normalized gradient flow.
    Ground(RunArgs),
    /// Propagate an initial field with Strang splitting.
    Dynamics(RunArgs),
    /// Bisect for the critical rotation frequency over a list of orders.
    Sweep(RunArgs),
    /// Run the built-in acceptance fixtures.
    Verify {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include the slow critical-rotation fixture.
        #[arg(long)]
        slow: bool,
    },
    /// Print a plot table from a snapshot or CSV file.
    Plot {
        /// `slice_x`, `contour_grid` or `timeseries`.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        input: PathBuf,
        /// Columns to keep for `timeseries` (comma separated).
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(args: &RunArgs, mode: Mode) -> Result<(RunConfig, PathBuf), Error> {
    let cfg = load_config(&args.config, Some(mode))?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::config("--threads", "must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::config("--threads", e.to_string()))?;
    }
    match cli.command {
        Command::Ground(args) => {
            let (cfg, out) = load(&args, Mode::Ground)?;
            let s = runner::run_ground(&cfg, &out)?;
            let e = &s.energy;
            println!("ground state after {} steps: E = {:.9}", s.steps, s.total_energy);
            println!(
                "  kinetic {:.9}  potential {:.9}  rotation {:.9}  interaction {:.9}  nonlocal {:.9}",
                e.kinetic, e.potential, e.rotation, e.interaction, e.nonlocal
            );
            println!("  max|phi| {:.9}  <L_z> {:.9}  output {}", s.max_abs, s.lz, out.display());
        }
        Command::Dynamics(args) => {
            let (cfg, out) = load(&args, Mode::Dynamics)?;
            let s = runner::run_dynamics(&cfg, &out)?;
            println!(
                "propagated to t = {} in {} steps: mass drift {:.3e}, energy drift {:.3e}, output {}",
                s.t_final,
                s.steps,
                s.max_mass_drift,
                s.max_energy_drift,
                out.display()
            );
        }
        Command::Sweep(args) => {
            let (cfg, out) = load(&args, Mode::Sweep)?;
            let s = runner::run_sweep(&cfg, &out)?;
            for (s, w) in s.s.iter().zip(&s.omega_c) {
                println!("s = {s}: Omega_c = {w:.4}");
            }
        }
        Command::Verify { out, slow } => {
            runner::run_verify(out.as_deref(), slow, |o| println!("{o}"))?;
        }
        Command::Plot { kind, input, columns, out } => {
            let table = emit_plot_data(&input, &kind, &columns)?;
            match out {
                Some(path) => fnlse::io::write_text(&path, &table)?,
                None => print!("{table}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let key = match &e {
                Error::Config { key, .. } => format!(" key={key}"),
                _ => String::new(),
            };
            eprintln!("error kind={} code={code}{key} message={:?}", e.kind(), e.to_string());
            ExitCode::from(code as u8)
        }
    }
}
