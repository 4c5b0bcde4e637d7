//! File formats, reports, parallel sweeps and the command implementations
//! behind the `flownet` binary.

pub mod commands;
pub mod error;
pub mod format;
pub mod output;
pub mod report;
pub mod spec;
pub mod sweep;
