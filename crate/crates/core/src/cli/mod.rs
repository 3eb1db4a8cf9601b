//! Command-line interface.
//!
//! Every subcommand reads a flat JSON configuration (`--config`), takes all
//! randomness from `--seed` and writes its artifacts under `--out`. A summary
//! with the resolved configuration and seed is printed to stdout as one JSON
//! line. Failures print `{"code", "message"}` instead and exit with status 1.

mod commands;
pub mod io;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;

use self::commands::Context;
use self::io::Provenance;
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "setnet", version, about = "Cardinality-aware set prediction toolkit")]
struct Cli {
    /// JSON configuration file for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Generate counting, multi-label or box data.
    Synth,
    /// Train a cardinality network.
    Train,
    /// Predict cardinality parameters and modes.
    Predict,
    /// Evaluate multi-label predictions.
    EvalMl,
    /// Evaluate detections against ground truth.
    EvalDet,
    /// Run fixed or cardinality-driven NMS.
    Nms,
    /// Draw random finite sets.
    Sample,
    /// Check network gradients against finite differences.
    Gradcheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Predict => "predict",
            Command::EvalMl => "eval-ml",
            Command::EvalDet => "eval-det",
            Command::Nms => "nms",
            Command::Sample => "sample",
            Command::Gradcheck => "gradcheck",
        }
    }
}

fn error_code(e: &Error) -> &'static str {
    match e {
        Error::Config(_) | Error::Usage(_) => "config",
        Error::Numeric(_) => "numeric",
        Error::Domain(_) | Error::Shape(_) | Error::Data(_) | Error::Io(_) => "data",
    }
}

fn fail(code: &str, message: &str) -> i32 {
    log::error!("{message}");
    println!("{}", json!({ "code": code, "message": message }));
    1
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => return fail("config", e.to_string().lines().next().unwrap_or("invalid arguments")),
    };
    let ctx = Context {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
    };
    let outcome = match cli.command {
        Command::Synth => commands::synth(&ctx),
        Command::Train => commands::train_cmd(&ctx),
        Command::Predict => commands::predict(&ctx),
        Command::EvalMl => commands::eval_ml(&ctx),
        Command::EvalDet => commands::eval_det(&ctx),
        Command::Nms => commands::nms(&ctx),
        Command::Sample => commands::sample(&ctx),
        Command::Gradcheck => commands::gradcheck(&ctx),
    };
    let name = cli.command.name();
    let report = match outcome {
        Ok(r) => r,
        Err(e) => return fail(error_code(&e), &e.to_string()),
    };
    let hash = match Provenance::new(name, &report.config, ctx.seed) {
        Ok(p) => p.config_hash,
        Err(e) => return fail(error_code(&e), &e.to_string()),
    };
    log::info!("{name} wrote {} file(s)", report.outputs.len());
    let summary = json!({
        "command": name,
        "seed": ctx.seed,
        "config_hash": hash,
        "config": report.config,
        "outputs": report.outputs,
        "result": report.result,
    });
    println!("{summary}");
    0
}
