use std::process::ExitCode;

use clap::Parser;

use recpca_cli::args::Cli;
use recpca_cli::manifest::MANIFEST_FILE;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = recpca_cli::configure_threads().and_then(|()| recpca_cli::run(&cli.command));
    match result {
        Ok(manifest) => {
            eprintln!(
                "{}: {} outputs, listed in {MANIFEST_FILE}",
                manifest.command,
                manifest.outputs.len()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
