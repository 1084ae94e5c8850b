//! Command-line verbs and the local HTTP service.

pub mod commands;
pub mod server;
