//! Least-squares scaling fits of the success probability.

use crate::config::{Command, Param, RunConfig};
use crate::error::{CliError, Result};
use crate::sweep::ResultRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    /// `ln p = a + b x`
    LogLinear,
    /// `ln p = a + b ln x`
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit {
    /// Slope (log-linear) or exponent (power).
    pub coefficient: f64,
    pub intercept: f64,
    /// Largest absolute residual in `ln p`.
    pub max_residual: f64,
}

pub fn fit_scaling(rows: &[ResultRow], x_column: &str, mode: FitMode) -> Result<Fit> {
    if rows.len() < 3 {
        return Err(CliError::Fit(format!("at least 3 rows, got {}", rows.len())));
    }
    let mut xs = Vec::with_capacity(rows.len());
    let mut ys = Vec::with_capacity(rows.len());
    for r in rows {
        let x = r
            .value(x_column)
            .ok_or_else(|| CliError::Fit(format!("a value in column `{x_column}`")))?;
        let p = r
            .p_succ
            .filter(|&p| p > 0.0)
            .ok_or_else(|| CliError::Fit("positive p_succ in every row".into()))?;
        let x = match mode {
            FitMode::LogLinear => x,
            FitMode::Power if x > 0.0 => x.ln(),
            FitMode::Power => return Err(CliError::Fit(format!("positive `{x_column}` for a power fit"))),
        };
        xs.push(x);
        ys.push(p.ln());
    }
    for (i, a) in xs.iter().enumerate() {
        if xs[..i].contains(a) {
            return Err(CliError::Fit(format!("distinct `{x_column}` values")));
        }
    }

    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let coefficient = sxy / sxx;
    let intercept = my - coefficient * mx;
    let max_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - coefficient * x).abs())
        .fold(0.0, f64::max);
    Ok(Fit {
        coefficient,
        intercept,
        max_residual,
    })
}

/// `name=value` summary lines for a finished run.
///
/// A single grid over χ or η gets a power fit and a single grid over `L0`
/// a log-linear one; random sampling reports sample means.
pub fn summarize(cfg: &RunConfig, rows: &[ResultRow]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    out.push(("rows".to_string(), rows.len().to_string()));
    if cfg.command != Command::Decompose && cfg.samples.is_none() {
        if let [g] = cfg.grids[..] {
            let mode = match g.param {
                Param::Chi | Param::Eta => Some(FitMode::Power),
                Param::L0 => Some(FitMode::LogLinear),
                _ => None,
            };
            if let Some(mode) = mode {
                let name = g.param.column();
                match fit_scaling(rows, name, mode) {
                    Ok(f) => {
                        let kind = if mode == FitMode::Power { "exponent" } else { "slope" };
                        out.push((format!("fit.{name}.{kind}"), format!("{:.11e}", f.coefficient)));
                        out.push((format!("fit.{name}.max_residual"), format!("{:.3e}", f.max_residual)));
                        if g.param == Param::L0 && f.coefficient < 0.0 {
                            out.push(("fit.L0.attenuation_length".into(), format!("{:.11e}", -1.0 / f.coefficient)));
                        }
                    }
                    Err(e) => out.push((format!("fit.{name}.error"), e.to_string())),
                }
            }
        }
    }
    if cfg.samples.is_some() {
        for column in ["p_succ", "bell_fidelity", "postselected_fidelity", "p2"] {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r.value(column)).collect();
            if !vals.is_empty() {
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                out.push((format!("mean.{column}"), format!("{mean:.11e}")));
            }
        }
    }
    out
}
