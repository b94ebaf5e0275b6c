use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::error;
use taskspace_core::pipeline::{emit_figure_data, Pipeline, PipelineConfig, Stage};
use taskspace_core::Error;

/// Builds the task space from a Q&A corpus and runs the downstream analyses.
#[derive(Debug, Parser)]
#[command(name = "taskspace", version)]
struct Args {
    /// Stage to run: ingest, sbm, taxonomy, vectors, relatedness, value,
    /// jobs, econ, structure or all.
    #[arg(value_name = "STAGE")]
    command: Option<String>,
    /// Pipeline configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output root; each stage writes to `<DIR>/<stage>`.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Stage to run (same as the positional argument).
    #[arg(long, value_name = "NAME", conflicts_with = "command")]
    stage: Option<String>,
    /// Writes `<DIR>/figures/<ID>.csv` after any stage has run.
    #[arg(long, value_name = "ID")]
    figure: Vec<String>,
}

fn run(args: Args) -> Result<(), Error> {
    let stage = args.command.or(args.stage);
    if stage.is_none() && args.figure.is_empty() {
        return Err(Error::Config("nothing to do: give a stage or --figure".into()));
    }
    if let Some(name) = stage {
        let path = args.config.ok_or_else(|| Error::Config("--config is required to run a stage".into()))?;
        let pipeline = Pipeline::new(PipelineConfig::load(&path, args.seed)?, &args.out);
        if name == "all" {
            pipeline.run_all()?;
        } else {
            pipeline.run(name.parse::<Stage>()?)?;
        }
    }
    for id in &args.figure {
        let path = emit_figure_data(id, &args.out)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::MissingArtifact { .. }) => {
            error!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(1)
        }
    }
}
