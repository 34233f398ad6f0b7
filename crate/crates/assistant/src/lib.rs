//! The `ragraft` command line and the HTTP query service.

pub mod cli;
pub mod http;
