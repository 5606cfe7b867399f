mod cli;

use clap::Parser;

fn main() {
    std::process::exit(cli::main_with(cli::Cli::parse()));
}
