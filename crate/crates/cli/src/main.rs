use clap::Parser;
use spikelab_cli::app::{dispatch, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    std::process::exit(dispatch(Cli::parse()));
}
