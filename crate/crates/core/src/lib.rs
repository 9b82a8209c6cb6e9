pub mod cli;
pub mod config;
pub mod control_plane;
pub mod format;
pub mod metrics;
pub mod optimizer;
pub mod rf_env;
