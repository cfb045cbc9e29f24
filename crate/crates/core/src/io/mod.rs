//! Config text format, CSV time series and binary field snapshots.

pub mod config_format;
pub mod csv;
pub mod snapshot;

pub use config_format::{parse_config, serialize_config};
pub use csv::{write_timeseries, write_timeseries_file};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};
