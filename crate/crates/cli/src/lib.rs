//! Experiment runner for coupled graph-tensor factorization: file formats,
//! configuration and the `cgtf` subcommands.

pub mod config;
pub mod io;
pub mod run;
