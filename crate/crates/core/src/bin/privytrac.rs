use clap::Parser;
use privytrac::cli::{run, Cli};
use privytrac::Error;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli, &mut std::io::stdout().lock()) {
        eprintln!("error: {e}");
        std::process::exit(if matches!(e, Error::Usage(_)) { 2 } else { 1 });
    }
}
