//! `qclab` command-line front end.
//!
//! Exit codes: 0 all checks passed, 1 a mathematical check failed, 2 bad input.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod spec;
mod table;

use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::Parser;
use qclab::QcError;

use crate::commands::Outcome;
use crate::spec::{Cli, Command, UsageError};
use crate::table::Format;

fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::List(args) => commands::list(args),
        Command::Validate(args) => commands::validate(&args.resolve(Format::Text, 1, false)?),
        Command::Invariants(args) => commands::invariants(&args.resolve(Format::Text, 1, true)?),
        Command::Normality(args) => {
            let spec = args.run.resolve(Format::Text, 4, true)?;
            commands::normality(&spec, args.oracle.then_some(args.oracle_pairs as usize))
        }
        Command::Identities(args) => commands::identities(&args.resolve(Format::Text, 1, true)?),
        Command::Sweep(args) => commands::sweep(&args.resolve(Format::Csv, 4, true)?),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<QcError>() {
            return match e {
                QcError::Expr(_)
                | QcError::SizeMismatch { .. }
                | QcError::NonPositiveFactor { .. }
                | QcError::UnsupportedDimension(_)
                | QcError::OutsideDomain { .. }
                | QcError::UnknownName { .. }
                | QcError::Config(_)
                | QcError::Io(_) => 2,
                _ => 1,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    match run(&cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout
                .write_all(out.text.as_bytes())
                .and_then(|()| stdout.flush())
                .is_err()
            {
                return ExitCode::from(2);
            }
            eprintln!("finished in {:.2}s", start.elapsed().as_secs_f64());
            if out.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
