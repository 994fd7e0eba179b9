//! Command-line driver: configuration, commands and plotting.

pub mod cli;
pub mod commands;
pub mod config;
pub mod plot;
