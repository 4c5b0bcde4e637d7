use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use flownet::commands::{self, Init, MarginArgs, Outcome, Settings, SimulateArgs};
use flownet::error::CliError;
use flownet_core::dynamics::SampleMode;

/// Resilience analysis and simulation of dynamical flow networks.
#[derive(Parser, Debug)]
#[command(name = "flownet", version)]
struct Cli {
    /// Seed for every randomised step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Simulation horizon.
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Relative tolerance of the transferring decision.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Scale a link's flow function, `link=s` with s in (0, 1]. Repeatable,
    /// or comma-separated.
    #[arg(long, global = true, value_delimiter = ',', value_name = "LINK=S")]
    scale: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Sampling {
    /// Every accepted step.
    Every,
    /// Fixed checkpoints plus events.
    Checkpoints,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Equilibrium, margins, bounds and the min-cut witness.
    Analyze { spec: PathBuf },
    /// Integrate the dynamics and write the trajectory.
    Simulate {
        spec: PathBuf,
        /// `equilibrium` or a JSON file with initial densities.
        #[arg(long, default_value = "equilibrium")]
        init: Init,
        /// JSON file with per-link scales or clip levels.
        #[arg(long)]
        perturbation: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Sampling::Every)]
        sample: Sampling,
        /// Integrator relative tolerance.
        #[arg(long)]
        rtol: Option<f64>,
    },
    /// Sweep perturbation magnitudes and bisect along rays.
    Margin {
        spec: PathBuf,
        /// JSON sweep settings.
        #[arg(long)]
        sweep: Option<PathBuf>,
        /// Comma-separated scale grid.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Ray end, `link=s,link=s`. Repeatable.
        #[arg(long)]
        ray: Vec<String>,
        #[arg(long)]
        max_combinations: Option<usize>,
        /// Refuse grids above the cap instead of subsampling.
        #[arg(long)]
        no_subsample: bool,
        #[arg(long)]
        no_critical_ray: bool,
        #[arg(long)]
        ray_tolerance: Option<f64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Validate the spec and test the routing axioms by sampling.
    Check {
        spec: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let settings = Settings {
        seed: cli.seed,
        out: cli.out,
        horizon: cli.horizon,
        tol: cli.tol,
        scales: cli.scale,
    };
    match cli.command {
        Command::Analyze { spec } => commands::analyze(&spec, &settings),
        Command::Simulate {
            spec,
            init,
            perturbation,
            sample,
            rtol,
        } => {
            let args = SimulateArgs {
                init,
                perturbation,
                sample_mode: match sample {
                    Sampling::Every => SampleMode::EveryStep,
                    Sampling::Checkpoints => SampleMode::Checkpoints,
                },
                rtol,
            };
            commands::simulate(&spec, &settings, &args)
        }
        Command::Margin {
            spec,
            sweep,
            grid,
            ray,
            max_combinations,
            no_subsample,
            no_critical_ray,
            ray_tolerance,
            threads,
        } => {
            let args = MarginArgs {
                sweep,
                grid,
                rays: ray,
                max_combinations,
                no_subsample,
                no_critical_ray,
                ray_tolerance,
                threads,
            };
            commands::margin(&spec, &settings, &args)
        }
        Command::Check { spec, samples } => commands::check(&spec, &settings, samples),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            ExitCode::from(outcome.exit as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
