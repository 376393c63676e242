//! Command-line front end for `bmdl-core`: station CSV ingestion, JSON
//! output documents and the `bmdl` subcommands.

pub mod commands;
pub mod ingest;
pub mod output;

pub use commands::{run, Cli};
