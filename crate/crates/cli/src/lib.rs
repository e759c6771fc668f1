//! Configuration and subcommand runners behind the `kredux` binary.

pub mod commands;
pub mod config;
