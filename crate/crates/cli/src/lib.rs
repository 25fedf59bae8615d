//! Command-line front end of the repeater simulator: configuration, parameter
//! sweeps with optional random channel noise, CSV output and scaling fits.

pub mod config;
pub mod error;
pub mod fit;
pub mod sweep;

pub use config::{parse_config, Command, Grid, Param, RunConfig};
pub use error::{CliError, Result};
pub use fit::{fit_scaling, summarize, Fit, FitMode};
pub use sweep::{evaluate, points, run_sweep, write_csv, Point, ResultRow, HEADER};
