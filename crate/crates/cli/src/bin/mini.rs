use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use taskspace_core::synth::{write_mini_corpus, MiniSpec};

/// Writes the synthetic mini corpus and a matching `pipeline.conf`.
#[derive(Debug, Parser)]
#[command(name = "taskspace-mini", version)]
struct Args {
    /// Target directory.
    dir: PathBuf,
    #[arg(long, default_value_t = MiniSpec::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = MiniSpec::default().n_questions)]
    questions: usize,
    #[arg(long, default_value_t = MiniSpec::default().n_users)]
    users: usize,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let spec = MiniSpec {
        seed: args.seed,
        n_questions: args.questions,
        n_users: args.users,
        ..MiniSpec::default()
    };
    match write_mini_corpus(&args.dir, &spec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
