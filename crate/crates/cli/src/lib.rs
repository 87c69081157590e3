//! Command-line front end for `perpetua`: loads a problem from a preset or a
//! TOML file, runs the lattice iteration, and writes CSV and JSON artifacts.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numeric or certificate failure.

pub mod commands;
pub mod config;
pub mod document;
pub mod error;

pub use config::{Cli, Command};
pub use document::{CertificateDocument, CERTIFICATE_SCHEMA};
pub use error::CliError;

/// Runs a parsed command, printing its human-facing output.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Approximate(args) => {
            let artifacts = commands::approximate(&args)?;
            print!("{}", document::report_text(&artifacts.document));
            println!("artifacts      {}", artifacts.out_dir.display());
        }
        Command::Certify(args) => {
            let doc = commands::certify(&args)?;
            print!("{}", doc.to_json());
            eprint!("{}", document::report_text(&doc));
        }
        Command::Bench(args) => {
            let rows = commands::bench(&args)?;
            print!("{}", commands::bench_table(&rows));
            commands::check_bench(&rows)?;
        }
    }
    Ok(())
}
