use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use scanlens::commands;
use scanlens_core::artifact::validate;
use scanlens_core::GridShape;

#[derive(Parser)]
#[command(name = "scanlens", version, about = "Hidden-attention workbench for cross-scan vision models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the seeded model over images and write an artifact directory.
    Extract {
        /// JSON or TOML config (model fields plus an optional `analysis` table).
        #[arg(long)]
        config: PathBuf,
        /// PNG directory, or `synthetic:N`.
        #[arg(long)]
        images: String,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Serve an artifact over the read-only HTTP API.
    Serve {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Check every tensor of an artifact; exits nonzero on any finding.
    Validate {
        #[arg(long)]
        artifact: PathBuf,
    },
    /// Print a scan order's permutation and locality score.
    Orders {
        /// Grid shape as `RxC`.
        #[arg(long)]
        shape: GridShape,
        #[arg(long)]
        order: String,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Extract {
            config,
            images,
            out,
            seed,
        } => {
            let m = commands::run_extract(&config, &images, &out, seed)?;
            let blocks: usize = m.stages.iter().map(|s| s.blocks.len()).sum();
            println!(
                "wrote {} ({} images, {} stages, {} blocks)",
                out.display(),
                m.n_images,
                m.stages.len(),
                blocks
            );
        }
        Command::Serve { artifact, port, host } => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(commands::serve(&artifact, &host, port))?;
        }
        Command::Validate { artifact } => {
            let report = validate(&artifact)?;
            print!("{}", commands::describe_report(&report));
            if !report.is_ok() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Orders { shape, order } => {
            let order = commands::parse_order(&order)?;
            print!("{}", commands::describe_order(shape, order)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
