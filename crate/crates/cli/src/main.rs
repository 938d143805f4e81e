use std::io;
use std::process::ExitCode;

use clap::Parser;
use randproj_cli::{run, Cli, CliError};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(threads) = cli.threads {
        let built = if threads == 0 {
            Err(CliError::Input("--threads must be at least 1".into()))
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| CliError::Input(e.to_string()))
        };
        if let Err(e) = built {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    }

    let stdout = io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
