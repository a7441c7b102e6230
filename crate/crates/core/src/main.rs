use clap::Parser;

fn main() {
    let cli = kkdirac::cli::Cli::parse();
    std::process::exit(kkdirac::cli::execute(cli));
}
