use std::fs::File;
use std::io::{self, BufWriter, Write};

use anyhow::{Context, Result};
use repeater_cli::config::Command;
use repeater_cli::sweep::decompose_summary;
use repeater_cli::{parse_config, run_sweep, summarize, write_csv, CliError};
use timebin_repeater::protocol::CHI_WARNING;

fn main() -> Result<()> {
    let cfg = match parse_config(std::env::args_os()) {
        Ok(cfg) => cfg,
        Err(CliError::Args(e)) => e.exit(),
        Err(e) => return Err(e.into()),
    };
    if cfg.chi > CHI_WARNING || cfg.grids.iter().any(|g| g.param == repeater_cli::Param::Chi && g.start.max(g.stop) > CHI_WARNING) {
        eprintln!("warning: chi above {CHI_WARNING}; higher-order emission is only partly modelled");
    }

    let rows = run_sweep(&cfg)?;
    let mut summary = summarize(&cfg, &rows);
    if cfg.command == Command::Decompose {
        for (k, v) in decompose_summary(&cfg)? {
            summary.push((k, format!("{v:.11e}")));
        }
    }

    match &cfg.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(&rows, BufWriter::new(file))?;
            let mut stdout = io::stdout().lock();
            for (k, v) in summary {
                writeln!(stdout, "{k}={v}")?;
            }
        }
        None => {
            // the table owns stdout; the summary goes to stderr
            write_csv(&rows, io::stdout().lock())?;
            for (k, v) in summary {
                eprintln!("{k}={v}");
            }
        }
    }
    Ok(())
}
