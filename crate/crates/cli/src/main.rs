use std::process::ExitCode;

use clap::Parser;
use qcm_cli::args::Cli;
use qcm_cli::error::exit;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (config, workers) = match cli.into_config() {
        Ok(v) => v,
        Err(e) => {
            eprintln!("qcm: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("qcm: cannot start worker pool: {e}");
            return ExitCode::from(exit::USAGE as u8);
        }
    };
    match pool.install(|| qcm_cli::execute(&config)) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if let Some(reason) = &outcome.unlocalized {
                eprintln!("qcm: {reason}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("qcm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
