use clap::Parser;

fn main() {
    let cli = stim::cli::Cli::parse();
    if let Err(e) = stim::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
