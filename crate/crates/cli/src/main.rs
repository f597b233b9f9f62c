use clap::Parser;

fn main() {
    let cli = sscnn::cli::Cli::parse();
    if let Err(e) = cli.run() {
        eprintln!("error: {e:#}");
        std::process::exit(sscnn::exit_code(&e));
    }
}
