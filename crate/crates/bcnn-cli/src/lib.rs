//! Library surface of the command-line tool: config files, the packed
//! model format, subcommand implementations, and the kernel benchmark.

pub mod bench;
pub mod commands;
pub mod config;
pub mod format;
