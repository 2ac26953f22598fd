//! Command-line front end: pretrain, adapt, sweep and verify.

pub mod commands;
pub mod config;
