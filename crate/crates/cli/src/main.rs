use clap::Parser;
use kgqa_cli::Cli;

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Err(e) = kgqa_cli::run(cli) {
        eprintln!("{e}");
        std::process::exit(e.class.exit_code());
    }
}
