//! Batch harness around `chcrit`: configuration, run lifecycle,
//! checkpoints and the output manifest.

pub mod commands;
pub mod config;
pub mod manifest;
