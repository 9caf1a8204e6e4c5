//! The `gas` command line: `plan`, `edit`, `eval` and `synth`.
//!
//! Exit codes: 0 success, 2 validation or usage, 3 client or transport,
//! 4 diverged optimization, 5 unparseable model output or plan file.

pub mod args;
pub mod config;
pub mod demo;
pub mod edit_cmd;
pub mod error;
pub mod eval_cmd;
pub mod files;
pub mod manifest;
pub mod plan_cmd;
pub mod synth_cmd;

use std::ffi::OsString;

use clap::Parser;

use crate::args::{Cli, Command};

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Plan(a) => plan_cmd::cmd_plan(&cli.common, a),
        Command::Edit(a) => edit_cmd::cmd_edit(&cli.common, a),
        Command::Eval(a) => eval_cmd::cmd_eval(&cli.common, a),
        Command::Synth(a) => synth_cmd::cmd_synth(&cli.common, a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.code
        }
    }
}
