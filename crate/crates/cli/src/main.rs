use std::path::PathBuf;
use std::process::ExitCode;

use cccb_cli::{cmd_run, exit, parse_config, run::output_dir, RunOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cccb", version, about = "Conservative contextual combinatorial bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a configuration file.
    Run {
        /// JSON experiment configuration.
        #[arg(long)]
        config: PathBuf,
        /// Added to every instance seed.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
        /// Worker threads for parallel episodes.
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        /// Output directory (overrides `output_dir` in the configuration).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let Command::Run {
        config,
        seed_offset,
        workers,
        output,
    } = Cli::parse().command;

    let config = match parse_config(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit::CONFIG_ERROR);
        }
    };
    if workers == 0 {
        eprintln!("error: invalid `--workers`: must be at least 1");
        return ExitCode::from(exit::CONFIG_ERROR);
    }
    let opts = RunOptions {
        seed_offset,
        workers,
        output: output_dir(output.as_deref(), &config),
    };
    match cmd_run(&config, &opts) {
        Ok(summary) if summary.passed() => {
            println!(
                "{}: {} episodes, all probes passed; wrote {} files to {}",
                config.experiment,
                summary.episodes,
                summary.files.len(),
                opts.output.display()
            );
            ExitCode::from(exit::SUCCESS)
        }
        Ok(summary) => {
            eprintln!(
                "{}: {} episodes; failed probes: {} (see {})",
                config.experiment,
                summary.episodes,
                summary.failed_probes.join(", "),
                opts.output.join("probes.json").display()
            );
            ExitCode::from(exit::PROBE_FAILURE)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::RUNTIME_ABORT)
        }
    }
}
