use clap::Parser;

fn main() {
    let cli = indefinite_cli::Cli::parse();
    if let Err(e) = indefinite_cli::execute(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
