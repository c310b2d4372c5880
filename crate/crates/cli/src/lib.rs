//! Command-line front end for the tear-film simulator: TOML run configs,
//! parameter sweeps, POD comparisons and the files they write.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, sweep};
pub use config::{BasisSource, Mode, RunConfig, SweepAxis, SweepConfig};
pub use output::{read_snapshot, Manifest, SnapshotMeta};
