//! `thicket` — scenario generation, single closed-loop runs, and benchmark
//! matrices for the depth-camera collision-avoidance stack.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! runtime failures.

mod commands;
mod config;
mod depth_dump;
mod report;
mod scene_io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "thicket", version, about = "Mapless depth-camera collision avoidance: scenario generation, trials, benchmarks")]
struct Cli {
    /// Print the complete effective default configuration (TOML) and exit.
    #[arg(long)]
    print_defaults: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded forest scene file.
    Generate {
        /// World extents as WxD or WxDxH metres, e.g. 50x30x3.
        #[arg(long, default_value = "50x30x3")]
        bounds: String,
        /// Trunks per square metre.
        #[arg(long, default_value_t = 1.0 / 25.0)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trunk radius range lo:hi in metres.
        #[arg(long)]
        radii: Option<String>,
        /// Output scene file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fly one closed-loop trial on a scene file.
    Run {
        #[arg(long)]
        scene: PathBuf,
        /// Desired speed in m/s; overrides the config.
        #[arg(long)]
        speed: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Configuration file (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for trajectory.csv and diagnostics.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also dump every rendered depth frame under <out>/depth/.
        #[arg(long)]
        dump_depth: bool,
    },
    /// Run the speed x ablation benchmark matrix.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for results.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Marker wrapped around failures that happen after configuration was
/// accepted, mapping them to exit code 2.
#[derive(Debug)]
struct RuntimeError(anyhow::Error);

impl RuntimeError {
    fn wrap(e: anyhow::Error) -> anyhow::Error {
        anyhow::Error::new(RuntimeError(e))
    }
}

impl std::fmt::Display for RuntimeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for RuntimeError {}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    if cli.print_defaults {
        print!("{}", RunConfig::default().to_toml());
        return Ok(());
    }
    match cli.command {
        None => {
            anyhow::bail!("no command given; try `thicket --help`")
        }
        Some(Command::Generate { bounds, density, seed, radii, out }) => {
            commands::generate(&bounds, density, seed, radii.as_deref(), &out)
        }
        Some(Command::Run { scene, speed, seed, config, out, dump_depth }) => {
            let cfg = load_config(config.as_ref())?;
            let out = commands::default_out(&cfg, out);
            commands::run(
                &cfg,
                &commands::RunArgs { scene: &scene, speed, seed, out: &out, dump_depth },
            )
        }
        Some(Command::Bench { config, out }) => {
            let cfg = load_config(config.as_ref())?;
            let out = commands::default_out(&cfg, out);
            commands::bench(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<RuntimeError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
