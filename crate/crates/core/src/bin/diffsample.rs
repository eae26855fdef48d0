use clap::Parser;
use diffsample::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
