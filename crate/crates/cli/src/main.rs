use std::process::ExitCode;

use bmdl_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            match e.chain().find_map(|c| c.downcast_ref::<bmdl_core::Error>()) {
                Some(core) => eprintln!("error: {}: {e:#}", core.kind()),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::from(1)
        }
    }
}
