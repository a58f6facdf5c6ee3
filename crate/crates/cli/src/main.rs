//! `prefmod` command-line front end.

mod commands;
mod failure;
mod manifest;
mod pipeline;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use prefmod::ErrorClass;

use crate::commands::*;
use crate::failure::{classify, error_line, exit_code};
use crate::pipeline::{pipeline, PipelineArgs};

#[derive(Debug, Parser)]
#[command(name = "prefmod", version, about = "Preference data, reward models and tabular RLHF")]
struct Cli {
    /// Worker threads for parallel stages (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic annotation corpus, oracle and bench set.
    GenSynth(GenSynthArgs),
    /// Aggregate annotations per task.
    Aggregate(AggregateArgs),
    /// Inter-annotator agreement at each filtering stage.
    Kappa(ReportArgs),
    /// Preference histogram, position bias and helpfulness correlation.
    Diagnostics(ReportArgs),
    /// Build judge training records from annotator justifications.
    Justify(JustifyArgs),
    /// Print the loss table for the representative scenarios.
    Table5,
    /// Train a reward model.
    Train(TrainArgs),
    /// Search attribute weights of a five-output model on a bench set.
    GridWeights(GridWeightsArgs),
    /// Extrapolate from a weak to a strong checkpoint.
    Expo(ExpoArgs),
    /// Score a model on a bench set.
    EvalBench(EvalBenchArgs),
    /// Train a tabular policy with DPO.
    Dpo(DpoArgs),
    /// Train a tabular policy with leave-one-out REINFORCE.
    Reinforce(ReinforceArgs),
    /// Generate a contextual bandit and preference pairs over it.
    GenBandit(GenBanditArgs),
    /// Generate, aggregate, train in two stages, extrapolate and evaluate.
    Pipeline(PipelineArgs),
}

fn dispatch(command: &Command) -> anyhow::Result<String> {
    match command {
        Command::GenSynth(a) => gen_synth(a),
        Command::Aggregate(a) => aggregate(a),
        Command::Kappa(a) => kappa(a),
        Command::Diagnostics(a) => diagnostics(a),
        Command::Justify(a) => justify(a),
        Command::Table5 => Ok(table5_text()),
        Command::Train(a) => train(a),
        Command::GridWeights(a) => grid_weights(a),
        Command::Expo(a) => expo_cmd(a),
        Command::EvalBench(a) => eval_bench(a),
        Command::Dpo(a) => dpo(a),
        Command::Reinforce(a) => reinforce(a),
        Command::GenBandit(a) => gen_bandit(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

/// Joins the error chain, skipping causes already quoted by their wrapper.
fn describe(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !parts.last().is_some_and(|p| p.ends_with(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn fail(class: ErrorClass, message: String) -> ExitCode {
    eprintln!("{}", error_line(class, message));
    ExitCode::from(exit_code(class) as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            return fail(ErrorClass::Config, first.to_string());
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail(ErrorClass::Config, "--threads must be >= 1".into());
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(ErrorClass::Config, e.to_string());
        }
    }
    match dispatch(&cli.command) {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => fail(classify(&e), describe(&e)),
    }
}
