//! Library surface of the command-line pipeline (configuration parsing
//! and experiment orchestration), shared by the binary and its tests.

pub mod config;
pub mod experiment;
