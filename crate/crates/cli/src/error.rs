use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },

    #[error("`{key}` = {value} is out of range ({expected})")]
    OutOfRange {
        key: String,
        value: f64,
        expected: &'static str,
    },

    #[error("no command given (expected one of generate, decompose, swap, chain, sweep)")]
    MissingCommand,

    #[error("config file line {line}: {reason}")]
    ConfigSyntax { line: usize, reason: String },

    #[error("fit needs {0}")]
    Fit(String),

    #[error(transparent)]
    Args(#[from] clap::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Simulation(#[from] timebin_repeater::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;
