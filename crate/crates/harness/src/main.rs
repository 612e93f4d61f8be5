use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use csysid_harness::config::{load_config, Mode};
use csysid_harness::{plot, run_experiment, HarnessError};

/// Clustered identification of linear time-invariant systems.
#[derive(Parser)]
#[command(name = "csysid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; falls back to the config's `output`, then `results`.
        #[arg(long, env = "CSYSID_OUTPUT_DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Build plot tables and charts from a run's output directory.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a config file.
    CheckConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            mode,
            iterations,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(mode) = mode {
                cfg.mode = mode;
            }
            if let Some(r) = iterations {
                cfg.iterations = r;
                cfg.validate()?;
            }
            let out = out
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from("results"));
            let outcome = run_experiment(&cfg, &out)?;
            for f in &outcome.files {
                println!("{}", f.display());
            }
        }
        Command::Plot { input, out } => {
            for f in plot::emit_plot_data(&input, &out)? {
                println!("{}", f.display());
            }
        }
        Command::CheckConfig { config } => {
            let cfg = load_config(&config)?;
            println!(
                "ok: mode {}, {} systems in {} clusters",
                cfg.mode, cfg.num_systems, cfg.num_clusters
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
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
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
