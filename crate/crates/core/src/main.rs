use clap::Parser;

use anharmonic::cli::{emit, Cli, CliError};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            println!("{}", CliError::validation(e.to_string().trim()).to_json());
            std::process::exit(2);
        }
    };
    std::process::exit(emit(&cli.command));
}
