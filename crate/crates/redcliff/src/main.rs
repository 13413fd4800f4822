use clap::Parser;

use redcliff::commands::{run, Command};

/// Dynamic Granger-causal graph hypotheses from conditionally weighted
/// factor models.
#[derive(Debug, Parser)]
#[command(name = "redcliff", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
