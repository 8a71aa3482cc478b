//! Harness around the chunked indexer: synthetic inputs, parity and recall
//! reports, design-space sweeps, ablations and the analytic memory model.

pub mod binfile;
pub mod commands;
pub mod config;
