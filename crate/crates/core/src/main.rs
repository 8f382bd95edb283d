use clap::Parser;

use relayopt::cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RELAYOPT_LOG", "warn")).init();
    std::process::exit(run(Cli::parse()));
}
