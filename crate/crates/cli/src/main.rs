use clap::Parser;

fn main() {
    let cli = dualev_cli::Cli::parse();
    if let Err(e) = dualev_cli::run(&cli) {
        eprintln!("dualev: {e}");
        std::process::exit(e.code());
    }
}
