mod args;
mod commands;
mod config;

use clap::Parser;

use args::{Cli, Command};

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::ExportMu(a) => commands::export_mu(a),
    }
}
