//! Command-line front end for the `wrain-core` crate: instance files,
//! SVG frames, the subcommands, and the step-session server.

pub mod commands;
pub mod server;
pub mod session;
pub mod svg;
