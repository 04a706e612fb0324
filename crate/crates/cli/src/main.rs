//! `mvdet`: synthetic scenes, projection queries, augmentation, decoding,
//! gradient checks, evaluation and benchmarks from the command line.

mod augment;
mod bench;
mod decode;
mod evaluate;
mod gradcheck;
mod output;
mod project;
mod synth;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use output::Outcome;

#[derive(Debug, Parser)]
#[command(name = "mvdet", version, about = "Multi-view 3D detection toolkit")]
struct Cli {
    /// Print a machine-readable JSON report on stdout.
    #[arg(long, global = true)]
    json: bool,

    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, env = "MVDET_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene: calibration, annotations, feature pyramid and decoder parameters.
    Synth(synth::SynthArgs),
    /// Project points into every camera and classify annotated objects by region.
    Project(project::ProjectArgs),
    /// Rescale annotated frames with one of the multi-scale augmentation modes.
    Augment(augment::AugmentArgs),
    /// Run the query decoder over a feature pyramid and emit predictions.
    Decode(decode::DecodeArgs),
    /// Compare analytic and finite-difference gradients of graph aggregation.
    Gradcheck(gradcheck::GradcheckArgs),
    /// Score predictions against annotations, optionally split by region.
    Evaluate(evaluate::EvaluateArgs),
    /// Time decoder passes and node-feature sampling.
    Bench(bench::BenchArgs),
}

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Synth(args) => synth::run(args),
        Command::Project(args) => project::run(args),
        Command::Augment(args) => augment::run(args),
        Command::Decode(args) => decode::run(args),
        Command::Gradcheck(args) => gradcheck::run(args),
        Command::Evaluate(args) => evaluate::run(args),
        Command::Bench(args) => bench::run(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let json = cli.json;
    match run(cli) {
        Ok(outcome) => {
            outcome.print(json);
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CHECK_FAILED)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
