//! Library surface of the CLI so integration tests can drive the same
//! code paths the binary uses.

pub mod commands;
pub mod config;
pub mod pipeline;
