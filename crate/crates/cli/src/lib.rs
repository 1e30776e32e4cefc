//! Batch runner for spikelab experiments: plans runs from flags and config
//! files, writes reports, tables, plots and a manifest, and replays manifests.

pub mod app;
pub mod checks;
pub mod compare;
pub mod config;
pub mod manifest;
pub mod plots;
pub mod runner;
