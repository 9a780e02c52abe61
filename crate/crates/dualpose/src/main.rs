use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dualpose::commands;

#[derive(Parser)]
#[command(name = "dualpose", about = "Relation-based multi-person pose estimation on synthetic scenes", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus a CSV loss log.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config's global seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on held-out scenes (PCK summary).
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare reverse-mode gradients against finite differences.
    Gradcheck {
        /// One of: cim, cjm, adfm, ijr, jir, decoder, full.
        selector: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Dump attention matrices for one scene as CSV and PGM files.
    DumpAttn {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene_seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, out, seed } => commands::cmd_train(&config, &out, seed),
        Command::Eval { ckpt, config, seed } => {
            commands::cmd_eval(&ckpt, &config, seed).map(|_| ())
        }
        Command::Gradcheck { selector, seed } => commands::cmd_gradcheck(&selector, seed),
        Command::DumpAttn { ckpt, scene_seed, out, seed } => {
            commands::cmd_dump_attn(&ckpt, scene_seed, &out, seed)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
