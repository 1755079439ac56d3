//! Command-line front end and HTTP service for the touch decoder.

pub mod commands;
pub mod http;
