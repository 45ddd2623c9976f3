use std::process::ExitCode;

use clap::Parser;
use transduct::cli::{run, Args};

fn main() -> ExitCode {
    ExitCode::from(run(&Args::parse()))
}
