use clap::Parser;

fn main() {
    let cli = qmf::cli::Cli::parse();
    std::process::exit(qmf::cli::run(cli));
}
