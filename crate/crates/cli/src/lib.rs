//! Command implementations behind the `scanlens` binary, plus the HTTP API.

pub mod api;
pub mod commands;
