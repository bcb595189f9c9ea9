use clap::Parser;

fn main() {
    std::process::exit(neurogrid_cli::run(neurogrid_cli::Cli::parse()));
}
