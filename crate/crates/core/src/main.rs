use clap::Parser;

fn main() {
    let cli = chainprof::cli::Cli::parse();
    std::process::exit(chainprof::cli::run(cli));
}
