//! `reach`: command-line tools for estimating the pointwise normal reach of
//! autoencoder decoder manifolds and training with a reach penalty.

mod args;
mod commands;

use clap::Parser;

fn main() {
    let cli = args::Cli::parse();
    let code = match commands::dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            commands::exit_code_for(&err)
        }
    };
    std::process::exit(code);
}
