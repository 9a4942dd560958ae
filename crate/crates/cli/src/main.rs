use std::io;
use std::process::ExitCode;

use bpb_cli::{main_with, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_with(cli, &mut io::stdout().lock()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
