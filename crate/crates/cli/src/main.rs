//! `beyondwords` CLI: run the full pipeline, run one stage, or generate the
//! bundled synthetic corpus.
//!
//! Exit codes: 0 success, 1 config error, 2 stage failure, 3 external-service
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use beyondwords_core::pipeline::{self, PipelineConfig, Stage};
use beyondwords_core::Error;

#[derive(Parser)]
#[command(name = "beyondwords", version, about = "Theme extraction pipeline for social-media corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage in order.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a single stage: ingest, embed, compress, factorize, cluster,
    /// sample, themes, or report.
    Stage {
        name: String,
        #[arg(long)]
        config: PathBuf,
        /// Re-run even when cached artifacts are still valid.
        #[arg(long)]
        force: bool,
    },
    /// Generate a synthetic test corpus with planted topics.
    Synth {
        #[arg(long)]
        posts: usize,
        #[arg(long, default_value_t = 3)]
        topics: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config } => {
            let cfg = PipelineConfig::load(&config)?;
            pipeline::run_all(&cfg)?;
            println!("run complete: {}", cfg.run_path().display());
        }
        Command::Stage { name, config, force } => {
            let stage: Stage = name.parse()?;
            let cfg = PipelineConfig::load(&config)?;
            pipeline::stage_run(&cfg, stage, force)?;
        }
        Command::Synth { posts, topics, out, seed } => {
            let records = pipeline::synth::generate_posts(posts, topics, seed)?;
            pipeline::synth::write_jsonl(&out, &records)?;
            println!("wrote {} posts to {}", records.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
