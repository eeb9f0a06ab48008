//! HTTP session service and command-line front end for `voxcompose-core`.

pub mod api;
pub mod cli;
pub mod config;
