use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod analyze;
mod manifest;
mod synth;
mod validate;

#[derive(Parser)]
#[command(name = "stagewise", version, about = "Degradation stage segmentation for battery cycling data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment one or more cycling datasets into degradation stages.
    Analyze(analyze::AnalyzeArgs),
    /// Write a synthetic dataset with known change cycles.
    Synth(synth::SynthArgs),
    /// Run the synthetic recovery and change-point battery.
    Validate(validate::ValidateArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STAGEWISE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(args) => analyze::run(&args),
        Command::Synth(args) => synth::run(&args),
        Command::Validate(args) => validate::run(&args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
