//! Configuration, run artifacts, and sweeps behind the `fairdc` binary.

pub mod config;
pub mod files;
pub mod run;
pub mod sweep;
