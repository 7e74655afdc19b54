use clap::Parser;

fn main() {
    let cli = rpf_cli::Cli::parse();
    if let Err(err) = rpf_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
