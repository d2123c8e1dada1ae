use clap::Parser;

fn main() {
    let cli = fujita_lab::cli::Cli::parse();
    std::process::exit(fujita_lab::cli::execute(cli));
}
