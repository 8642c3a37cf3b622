//! Library side of the `ideal` binary: argument types, the pipeline steps
//! behind each subcommand, run manifests, and the acceptance suite that
//! `ideal selftest` and the `acceptance` test target share.

pub mod acceptance;
pub mod commands;
pub mod manifest;
pub mod pipeline;

pub use commands::{run, Cli, Command};
