//! The `ssg` command: mean-field and agent-based simulation, optimal
//! control, critical-time fitting and the game server behind one binary.
//! Every run except `serve` writes a `manifest.json` next to its outputs.

pub mod args;
pub mod error;
pub mod manifest;
pub mod plot;
pub mod run;

pub use args::{Cli, Command};
pub use error::CliError;
pub use manifest::RunManifest;

/// `argv` is recorded in the manifest without the program path.
pub fn execute(cli: &Cli, argv: &[String]) -> Result<Option<RunManifest>, CliError> {
    let argv: Vec<String> = std::iter::once("ssg".to_string()).chain(argv.iter().skip(1).cloned()).collect();
    match &cli.command {
        Command::Meanfield(a) => run::meanfield(a, &argv).map(Some),
        Command::Abm(a) => run::abm(a, &argv).map(Some),
        Command::Solve(a) => run::solve_cmd(a, &argv).map(Some),
        Command::Synth(a) => run::synth(a, &argv).map(Some),
        Command::Session(a) => run::session(a, &argv).map(Some),
        Command::Fit(a) => run::fit(a, &argv).map(Some),
        Command::Serve(a) => run::serve(a).map(|_| None),
    }
}
