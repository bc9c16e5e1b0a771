use clap::Parser;
use courtlift_cli::{check_usage, run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = check_usage(&cli).and_then(|_| run(cli)) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
