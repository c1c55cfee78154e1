//! Command-line front end: scenario files, certificates, runs and sweeps.

pub mod commands;
pub mod report;
pub mod scenario;
