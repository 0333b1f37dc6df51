use clap::Parser;

fn main() {
    let cli = faircontrast::cli::Cli::parse();
    if let Err(e) = faircontrast::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
