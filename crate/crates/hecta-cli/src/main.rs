//! Operator surface: scenario generation, training, evaluation, robustness
//! sweeps, trajectory export, and plot emission.
//!
//! Exit codes: 0 success, 2 usage error, 3 input error, 4 numerical abort.

mod commands;
mod manifest;
mod plot;

use clap::{Args, Parser, Subcommand};
use hecta_core::learning::LearnError;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "hecta", version, about = "Crowdsensing task-allocation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct OutArg {
    /// Output directory; defaults to <HECTA_OUT or ./hecta-out>/<command>.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutArg {
    fn resolve(&self, command: &str) -> PathBuf {
        match &self.out {
            Some(p) => p.clone(),
            None => {
                let root = std::env::var_os("HECTA_OUT")
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("hecta-out"));
                root.join(command)
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate scenario files from a preset or explicit parameters.
    Gen(commands::GenArgs),
    /// Train the value-decomposition learner on a scenario.
    Train(commands::TrainArgs),
    /// Evaluate a policy's task completion rate.
    Eval(commands::EvalArgs),
    /// Robustness sweep over controlled scenario variations.
    Robust(commands::RobustArgs),
    /// Export one rollout as a trajectory CSV.
    Trace(commands::TraceArgs),
    /// Emit SVG figures from metrics, evaluation, or trajectory files.
    Plot(commands::PlotArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => commands::run_gen(args),
        Command::Train(args) => commands::run_train(args),
        Command::Eval(args) => commands::run_eval(args),
        Command::Robust(args) => commands::run_robust(args),
        Command::Trace(args) => commands::run_trace(args),
        Command::Plot(args) => commands::run_plot(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        let code = match err.downcast_ref::<LearnError>() {
            Some(LearnError::NumericalAbort { .. }) => 4,
            _ => 3,
        };
        std::process::exit(code);
    }
}
