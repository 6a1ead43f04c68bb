//! Library side of the `switchfm` command line tool.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod provenance;
