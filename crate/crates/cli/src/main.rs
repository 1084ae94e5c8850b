use std::process::ExitCode;

use clap::Parser;
use skinkit_cli::commands::{self, Cli, Command};
use tracing_subscriber::EnvFilter;

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_env_filter(EnvFilter::from_default_env()).with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Characterize(a) => commands::characterize_dir(a),
        Command::Snr(a) => commands::snr(a),
        Command::Serve(a) => {
            let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
            match rt.block_on(skinkit_cli::server::serve(a.port, a.assets.clone())) {
                Ok(()) => Ok(String::new()),
                Err(e) => Err(commands::CliError { code: 1, message: format!("serve: {e}") }),
            }
        }
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
