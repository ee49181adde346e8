//! Command-line front end and HTTP session server for dialogue workflow graphs.

pub mod commands;
pub mod load;
pub mod server;
