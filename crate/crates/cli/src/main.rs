use clap::Parser;
use gamn_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(cli) {
        eprintln!("gamn: {e}");
        std::process::exit(e.exit_code());
    }
}
