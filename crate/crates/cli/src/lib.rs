//! The `recpca` command line: one subcommand per pipeline stage, each writing
//! its outputs and a `manifest.json` into the directory given by `-o`.

pub mod args;
pub mod commands;
pub mod manifest;

use anyhow::Result;

use args::Command;
use manifest::RunManifest;

pub fn run(command: &Command) -> Result<RunManifest> {
    match command {
        Command::Synth(a) => commands::cmd_synth(a),
        Command::BuildGraph(a) => commands::cmd_build_graph(a),
        Command::Recpca(a) => commands::cmd_recpca(a),
        Command::Diagnose(a) => commands::cmd_diagnose(a),
        Command::Train(a) => commands::cmd_train(a),
    }
}

/// Size the global thread pool from `RECPCA_THREADS`, if set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("RECPCA_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow::anyhow!("RECPCA_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}
