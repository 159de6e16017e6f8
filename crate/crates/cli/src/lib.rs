//! Library side of the `kgdesc` binary: run configuration, manifests and
//! the subcommand implementations.

pub mod commands;
pub mod config;
pub mod manifest;
