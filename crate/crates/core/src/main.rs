use clap::Parser;

use swcv::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(f) = run(&cli) {
        eprintln!("swcv: {}", f.message);
        std::process::exit(f.code);
    }
}
