//! Command-line front end: experiment files, builtin figure runs, CSV output.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::{parse_config, parse_config_str, ExperimentSpec, SweepPoint};
pub use error::CliError;
pub use experiments::{run_builtin, run_experiment, Builtin, BuiltinOptions};

/// Environment variable that sets the output directory.
pub const OUT_DIR_ENV: &str = "SHADOWNET_OUT_DIR";
