//! Experiment harness for the `phyaug` command-line tool.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod plot;
