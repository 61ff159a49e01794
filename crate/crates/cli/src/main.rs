//! `qwold`: verify, extract and transform q-commuting isometry models from the
//! command line. Every subcommand prints a JSON report on stdout.

mod commands;
mod source;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qwold::report::VerificationReport;
use qwold::Error;

use source::SourceArgs;

#[derive(Parser, Debug)]
#[command(name = "qwold", version, about = "Wold-type models of q-commuting isometries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full pipeline: q-commutativity, extraction, model rebuild, τ, doubly-q, defect identities.
    Verify(SourceArgs),
    /// Emit the extracted pair tuple (two operators) or tuple model (three or more).
    Extract(SourceArgs),
    /// Wold decomposition of one operator or of the product.
    Wold(WoldArgs),
    /// Decide a word identity with the rewrite engine.
    Prove(ProveArgs),
    /// Extend the extracted model to unitaries on a bilateral window.
    Extend(ExtendArgs),
    /// Pass between commuting and q-commuting pairs.
    Passage(PassageArgs),
}

#[derive(Args, Debug)]
struct WoldArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// `product` or a 1-based operator index.
    #[arg(long, default_value = "product")]
    operator: String,
}

#[derive(Args, Debug)]
struct ProveArgs {
    #[arg(long)]
    lhs: String,
    #[arg(long)]
    rhs: String,
    #[arg(long)]
    q: String,
    /// Use the doubly q-commutative relations.
    #[arg(long)]
    doubly: bool,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExtendArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Negative degrees of the bilateral window, `ζ^{-M}` upwards.
    #[arg(long)]
    bilateral: usize,
    /// Positive degrees of the bilateral window; defaults to `--bilateral`.
    #[arg(long)]
    positive: Option<usize>,
}

#[derive(Args, Debug)]
struct PassageArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// `comm2q` or `q2comm`.
    #[arg(long)]
    direction: String,
}

/// An aborted run, with the exit code of its category.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const EXIT_FAIL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_UNKNOWN_FIXTURE: u8 = 4;
pub const EXIT_INCONSISTENT_Q: u8 = 5;
pub const EXIT_NUMERICAL: u8 = 6;

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure { code: EXIT_INPUT, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::UnknownFixture(_) => EXIT_UNKNOWN_FIXTURE,
            Error::NotQCommutative { .. } | Error::NoUnimodularQ { .. } | Error::InconsistentQ(_) => EXIT_INCONSISTENT_Q,
            Error::Json(_) | Error::OperatorSyntax(_) | Error::InvalidTuple(_) | Error::SignatureMismatch(_) => {
                EXIT_INPUT
            }
            Error::PhaseSyntax(_)
            | Error::WordSyntax(_)
            | Error::InvalidArgument(_)
            | Error::InvalidWindow { .. }
            | Error::InvalidQMatrix(_)
            | Error::IndexOutOfRange { .. }
            | Error::IrrationalPhase => EXIT_USAGE,
            Error::Hypothesis(_) => EXIT_FAIL,
            Error::NotIsometric { .. } | Error::Inconclusive { .. } | Error::RankMismatch(_) | Error::ExtractionFailed(_) => {
                EXIT_NUMERICAL
            }
        };
        Failure { code, message: e.to_string() }
    }
}

fn seed() -> Result<u64, Failure> {
    match std::env::var("QWOLD_SEED") {
        Ok(s) => s.trim().parse().map_err(|_| Failure::usage(format!("QWOLD_SEED must be an unsigned integer, got {s:?}"))),
        Err(_) => Ok(0),
    }
}

fn run(cli: Cli) -> Result<(VerificationReport, Option<PathBuf>), Failure> {
    let seed = seed()?;
    Ok(match cli.command {
        Command::Verify(a) => (commands::verify(&a, seed)?, a.json),
        Command::Extract(a) => (commands::extract(&a)?, a.json),
        Command::Wold(a) => (commands::wold(&a.source, &a.operator)?, a.source.json),
        Command::Prove(a) => (commands::prove(&a.lhs, &a.rhs, &a.q, a.doubly)?, a.json),
        Command::Extend(a) => {
            (commands::extend(&a.source, a.bilateral, a.positive.unwrap_or(a.bilateral))?, a.source.json)
        }
        Command::Passage(a) => (commands::passage(&a.source, &a.direction)?, a.source.json),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((report, out)) => {
            let text = match serde_json::to_string_pretty(&report) {
                Ok(t) => t + "\n",
                Err(e) => {
                    eprintln!("qwold: error: {e}");
                    return ExitCode::from(EXIT_NUMERICAL);
                }
            };
            print!("{text}");
            if let Some(path) = out {
                if let Err(e) = std::fs::write(&path, &text) {
                    eprintln!("qwold: error: {}: {e}", path.display());
                    return ExitCode::from(EXIT_INPUT);
                }
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            }
        }
        Err(f) => {
            eprintln!("qwold: error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
