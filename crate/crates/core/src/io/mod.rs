//! Configuration ingestion, scenario presets, report and trace
//! serialization, and the command implementations behind the CLI.

pub mod commands;
pub mod config;
pub mod presets;
pub mod report;
pub mod trace;
