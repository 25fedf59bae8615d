//! Command-line and config-file parsing.
//!
//! The config file holds `key = value` lines (`#` starts a comment) using the
//! long flag names without dashes; `grid` may repeat. Values given on the
//! command line override the file.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use timebin_repeater::fock::MAX_CAP;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Heralded link metrics.
    Generate,
    /// Time-bin sector weights of one node after the midpoint optics.
    Decompose,
    /// Link metrics plus one entanglement swap.
    Swap,
    /// Link metrics plus nested swapping over `segments` links.
    Chain,
    /// Same as `chain`, intended for grids and random sampling.
    Sweep,
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Command::from_str_value(s)
    }
}

impl Command {
    fn from_str_value(s: &str) -> Result<Self> {
        <Command as ValueEnum>::from_str(s.trim(), true).map_err(|reason| CliError::InvalidValue {
            key: "command".into(),
            reason,
        })
    }
}

/// A scalar input that can be swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Param {
    Chi,
    Eta,
    RetrievalEta,
    L0,
    Latt,
    ThetaA,
    PhiA,
    ThetaB,
    PhiB,
}

impl Param {
    pub fn parse(name: &str) -> Option<Param> {
        Some(match name.trim() {
            "chi" => Param::Chi,
            "eta" => Param::Eta,
            "retrieval_eta" | "retrieval-eta" => Param::RetrievalEta,
            "L0" => Param::L0,
            "Latt" => Param::Latt,
            "theta" | "theta_a" | "theta-a" => Param::ThetaA,
            "phi" | "phi_a" | "phi-a" => Param::PhiA,
            "theta_b" | "theta-b" => Param::ThetaB,
            "phi_b" | "phi-b" => Param::PhiB,
            _ => return None,
        })
    }

    /// Column name in the output table.
    pub fn column(self) -> &'static str {
        match self {
            Param::Chi => "chi",
            Param::Eta => "eta",
            Param::RetrievalEta => "retrieval_eta",
            Param::L0 => "L0",
            Param::Latt => "Latt",
            Param::ThetaA => "theta_a",
            Param::PhiA => "phi_a",
            Param::ThetaB => "theta_b",
            Param::PhiB => "phi_b",
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

/// `count` evenly spaced values from `start` to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub param: Param,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count)
            .map(|k| if k + 1 == self.count { self.stop } else { self.start + step * k as f64 })
            .collect()
    }
}

impl FromStr for Grid {
    type Err = CliError;

    /// `name=start:stop:count`
    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| CliError::InvalidValue {
            key: "grid".into(),
            reason: format!("{reason} in `{s}` (expected name=start:stop:count)"),
        };
        let (name, range) = s.split_once('=').ok_or_else(|| bad("missing `=`"))?;
        let param = Param::parse(name).ok_or_else(|| CliError::UnknownKey(name.trim().into()))?;
        let parts: Vec<&str> = range.split(':').map(str::trim).collect();
        let [start, stop, count] = parts[..] else {
            return Err(bad("need three fields"));
        };
        let start = start.parse().map_err(|_| bad("bad start"))?;
        let stop = stop.parse().map_err(|_| bad("bad stop"))?;
        let count: usize = count.parse().map_err(|_| bad("bad count"))?;
        if count < 1 {
            return Err(bad("count must be at least 1"));
        }
        Ok(Grid {
            param,
            start,
            stop,
            count,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub chi: f64,
    pub eta: f64,
    pub retrieval_eta: f64,
    pub l0: f64,
    pub latt: f64,
    pub theta_a: f64,
    pub phi_a: f64,
    /// Follows `theta_a` when unset.
    pub theta_b: Option<f64>,
    /// Follows `phi_a` when unset.
    pub phi_b: Option<f64>,
    pub grids: Vec<Grid>,
    /// Random channel noise: this many draws per grid point.
    pub samples: Option<usize>,
    pub seed: u64,
    pub segments: usize,
    /// Truncation of the two-node state; each node keeps half.
    pub cap: u32,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            chi: 0.01,
            eta: 1.0,
            retrieval_eta: 1.0,
            l0: 0.0,
            latt: 22.0,
            theta_a: 0.0,
            phi_a: 0.0,
            theta_b: None,
            phi_b: None,
            grids: Vec::new(),
            samples: None,
            seed: 0,
            segments: 2,
            cap: 8,
            out: None,
        }
    }

    pub fn grid(&self, param: Param) -> Option<&Grid> {
        self.grids.iter().find(|g| g.param == param)
    }

    fn set_grid(&mut self, grid: Grid) {
        match self.grids.iter_mut().find(|g| g.param == grid.param) {
            Some(slot) => *slot = grid,
            None => self.grids.push(grid),
        }
    }

    /// Checks every fixed value and every grid endpoint.
    pub fn validate(&self) -> Result<()> {
        let mut checks = vec![
            (Param::Chi, self.chi),
            (Param::Eta, self.eta),
            (Param::RetrievalEta, self.retrieval_eta),
            (Param::L0, self.l0),
            (Param::Latt, self.latt),
        ];
        for g in &self.grids {
            checks.push((g.param, g.start));
            checks.push((g.param, g.stop));
        }
        for (param, value) in checks {
            check_param(param, value)?;
        }
        for (key, v) in [
            ("theta", Some(self.theta_a)),
            ("phi", Some(self.phi_a)),
            ("theta_b", self.theta_b),
            ("phi_b", self.phi_b),
        ] {
            if let Some(v) = v.filter(|v| !v.is_finite()) {
                return Err(CliError::OutOfRange {
                    key: key.into(),
                    value: v,
                    expected: "finite",
                });
            }
        }
        if self.segments < 2 || !self.segments.is_power_of_two() {
            return Err(CliError::OutOfRange {
                key: "segments".into(),
                value: self.segments as f64,
                expected: "a power of two, at least 2",
            });
        }
        if !(4..=MAX_CAP).contains(&self.cap) {
            return Err(CliError::OutOfRange {
                key: "cap".into(),
                value: f64::from(self.cap),
                expected: "4 ..= 64",
            });
        }
        if self.samples == Some(0) {
            return Err(CliError::OutOfRange {
                key: "samples".into(),
                value: 0.0,
                expected: "at least 1",
            });
        }
        Ok(())
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let value = value.trim();
        match key {
            "command" => self.command = value.parse()?,
            "grid" => self.set_grid(value.parse()?),
            "samples" => self.samples = Some(parse(key, value)?),
            "seed" => self.seed = parse(key, value)?,
            "segments" => self.segments = parse(key, value)?,
            "cap" => self.cap = parse(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            _ => {
                let param = Param::parse(key).ok_or_else(|| CliError::UnknownKey(key.into()))?;
                let v: f64 = parse(key, value)?;
                match param {
                    Param::Chi => self.chi = v,
                    Param::Eta => self.eta = v,
                    Param::RetrievalEta => self.retrieval_eta = v,
                    Param::L0 => self.l0 = v,
                    Param::Latt => self.latt = v,
                    Param::ThetaA => self.theta_a = v,
                    Param::PhiA => self.phi_a = v,
                    Param::ThetaB => self.theta_b = Some(v),
                    Param::PhiB => self.phi_b = Some(v),
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn check_param(param: Param, value: f64) -> Result<()> {
    let (ok, expected) = match param {
        Param::Chi => (value > 0.0 && value < 0.5, "0 < chi < 0.5"),
        Param::Eta | Param::RetrievalEta => ((0.0..=1.0).contains(&value), "[0, 1]"),
        Param::L0 => (value >= 0.0 && value.is_finite(), ">= 0"),
        Param::Latt => (value > 0.0 && value.is_finite(), "> 0"),
        _ => (value.is_finite(), "finite"),
    };
    if ok {
        Ok(())
    } else {
        Err(CliError::OutOfRange {
            key: param.column().into(),
            value,
            expected,
        })
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| CliError::InvalidValue {
        key: key.into(),
        reason: format!("`{value}`: {e}"),
    })
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| CliError::ConfigSyntax {
            line: n + 1,
            reason: format!("expected `key = value`, got `{line}`"),
        })?;
        if k.trim().is_empty() {
            return Err(CliError::ConfigSyntax {
                line: n + 1,
                reason: "empty key".into(),
            });
        }
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Simulator of a noise-insensitive atomic-ensemble quantum repeater.
#[derive(Debug, Parser)]
#[command(name = "repeater", version, allow_negative_numbers = true)]
struct Args {
    #[arg(value_enum)]
    command: Option<Command>,
    /// Excitation probability per write pulse.
    #[arg(long)]
    chi: Option<f64>,
    /// Detector efficiency.
    #[arg(long)]
    eta: Option<f64>,
    /// Memory retrieval efficiency used by swaps
    #[arg(long = "retrieval-eta")]
    retrieval_eta: Option<f64>,
    /// Node separation.
    #[arg(long = "L0")]
    l0: Option<f64>,
    /// Attenuation length, same units as L0.
    #[arg(long = "Latt")]
    latt: Option<f64>,
    /// Polarization rotation angle of the left fibre.
    #[arg(long)]
    theta: Option<f64>,
    /// Polarization phase of the left fibre.
    #[arg(long)]
    phi: Option<f64>,
    /// Rotation angle of the right fibre, defaults to --theta
    #[arg(long = "theta-b")]
    theta_b: Option<f64>,
    /// Polarization phase of the right fibre, defaults to --phi
    #[arg(long = "phi-b")]
    phi_b: Option<f64>,
    /// `name=start:stop:count`, repeatable; grids combine as a cartesian product.
    #[arg(long)]
    grid: Vec<String>,
    /// Draw this many random noise settings per grid point.
    #[arg(long)]
    samples: Option<usize>,
    /// Seed for the random noise draws
    #[arg(long)]
    seed: Option<u64>,
    /// Number of elementary links in a chain, a power of two
    #[arg(long)]
    segments: Option<usize>,
    /// Excitation cap of a link state
    #[arg(long)]
    cap: Option<u32>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key = value` file read before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Args {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut v: Vec<(&'static str, String)> = Vec::new();
        let mut push = |k: &'static str, x: Option<String>| {
            if let Some(x) = x {
                v.push((k, x));
            }
        };
        push("chi", self.chi.map(|x| x.to_string()));
        push("eta", self.eta.map(|x| x.to_string()));
        push("retrieval_eta", self.retrieval_eta.map(|x| x.to_string()));
        push("L0", self.l0.map(|x| x.to_string()));
        push("Latt", self.latt.map(|x| x.to_string()));
        push("theta", self.theta.map(|x| x.to_string()));
        push("phi", self.phi.map(|x| x.to_string()));
        push("theta_b", self.theta_b.map(|x| x.to_string()));
        push("phi_b", self.phi_b.map(|x| x.to_string()));
        push("samples", self.samples.map(|x| x.to_string()));
        push("seed", self.seed.map(|x| x.to_string()));
        push("segments", self.segments.map(|x| x.to_string()));
        push("cap", self.cap.map(|x| x.to_string()));
        push("out", self.out.as_ref().map(|p| p.display().to_string()));
        for g in &self.grid {
            v.push(("grid", g.clone()));
        }
        v
    }
}

/// Builds a validated [`RunConfig`] from `argv` (program name first).
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = Args::try_parse_from(argv)?;
    let file = match &args.config {
        Some(path) => parse_config_text(&std::fs::read_to_string(path)?)?,
        None => Vec::new(),
    };
    let file_command = file
        .iter()
        .rev()
        .find(|(k, _)| k == "command")
        .map(|(_, v)| v.parse::<Command>())
        .transpose()?;
    let command = args.command.or(file_command).ok_or(CliError::MissingCommand)?;

    let mut cfg = RunConfig::new(command);
    for (k, v) in &file {
        if k != "command" {
            cfg.apply(k, v)?;
        }
    }
    for (k, v) in args.pairs() {
        cfg.apply(k, &v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}
