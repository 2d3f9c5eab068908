use clap::Parser;
use samtwostep::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
