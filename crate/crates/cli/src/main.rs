use clap::error::ErrorKind;
use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match trimrank_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            // usage mistakes are validation errors, not runtime failures
            std::process::exit(if informational { 0 } else { 1 });
        }
    };
    if let Err(e) = trimrank_cli::run(cli) {
        log::error!("{e}");
        std::process::exit(e.exit_code());
    }
}
