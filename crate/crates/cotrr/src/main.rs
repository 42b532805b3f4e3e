use clap::Parser;

fn main() {
    let cli = cotrr::cli::Cli::parse();
    std::process::exit(cotrr::cli::dispatch(&cli));
}
