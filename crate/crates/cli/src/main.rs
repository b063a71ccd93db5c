//! `agenda-infer`: train type-bias factor models on labeled rating data
//! and replay question-selection sessions that infer each user's binary
//! type from the answers.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
//! error.

mod commands;
mod config;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use config::{Args, Config};

#[derive(Parser)]
#[command(
    name = "agenda-infer",
    version,
    about = "Infer binary user attributes from solicited item ratings",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Subcommand)]
enum Cmd {
    /// Load, filter, and snapshot a labeled rating dataset.
    Ingest(Args),
    /// Train the type-bias factor model on a dataset snapshot.
    Train(Args),
    /// Grid-search hyperparameters with user-disjoint cross-validation.
    Cv(Args),
    /// Replay question-selection sessions and write per-question reports.
    Simulate(Args),
    /// Time direct against incremental question selection.
    Bench(Args),
    /// Run the built-in numerical consistency suites.
    Selftest(Args),
}

impl Cmd {
    fn split(&self) -> (&'static str, &Args) {
        match self {
            Cmd::Ingest(a) => ("ingest", a),
            Cmd::Train(a) => ("train", a),
            Cmd::Cv(a) => ("cv", a),
            Cmd::Simulate(a) => ("simulate", a),
            Cmd::Bench(a) => ("bench", a),
            Cmd::Selftest(a) => ("selftest", a),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = cli.command.split();

    let resolved = Config::resolve(args).and_then(|cfg| {
        cfg.require_for(name)?;
        Ok(cfg)
    });
    let cfg = match resolved {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("agenda-infer: {e}");
            return ExitCode::from(2);
        }
    };
    if args.print_config {
        print!("{}", cfg.echo());
    }
    if cfg.jobs > 0 {
        // Caps every parallel stage; a pool may already exist when
        // embedded in tests, in which case the cap is best-effort.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global();
    }

    let result = match name {
        "ingest" => commands::ingest(&cfg),
        "train" => commands::train(&cfg),
        "cv" => commands::cv(&cfg),
        "simulate" => commands::simulate(&cfg),
        "bench" => commands::bench(&cfg),
        "selftest" => commands::selftest(&cfg),
        _ => unreachable!("all subcommands dispatched"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("agenda-infer: {e:#}");
            ExitCode::from(1)
        }
    }
}
