//! Library side of the `driftsync` command: config parsing, commands and
//! artifact writers.

pub mod commands;
pub mod config;
pub mod output;
