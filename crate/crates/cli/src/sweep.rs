//! One-parameter sweeps: each value runs as an independent experiment in
//! its own subdirectory, concurrently.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Alpha, ExperimentConfig, FamilyName, ModelKind};
use crate::error::CliError;
use crate::experiment::{execute, Mode, Record, EXIT_ERROR};
use crate::report::{fmt_num, write_all};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Width,
    Alpha,
    Beta,
    Datasize,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Width => "width",
            Axis::Alpha => "alpha",
            Axis::Beta => "beta",
            Axis::Datasize => "datasize",
        }
    }
}

fn as_count(axis: Axis, v: f64) -> Result<usize, CliError> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(CliError::Config(format!(
            "{} value {v} is not a positive integer",
            axis.as_str()
        )))
    }
}

/// Config with the swept parameter set to `v`.
pub fn apply(cfg: &ExperimentConfig, axis: Axis, v: f64) -> Result<ExperimentConfig, CliError> {
    let mut c = cfg.clone();
    let p = &mut c.problem;
    let unsupported = || CliError::Config(format!("axis {} does not apply to this problem", axis.as_str()));
    match axis {
        Axis::Width => {
            let w = as_count(axis, v)?;
            match p.family {
                FamilyName::Supervised => match &mut p.model {
                    Some(m) if m.kind != ModelKind::Linear => m.width = Some(w),
                    _ => return Err(unsupported()),
                },
                FamilyName::Vae => {
                    let vae = p.vae.as_mut().ok_or_else(unsupported)?;
                    vae.encoder_width = w;
                    vae.decoder_width = w;
                }
                FamilyName::Gan => p.gan.as_mut().ok_or_else(unsupported)?.width = Some(w),
            }
        }
        Axis::Alpha => c.descent.alpha = Alpha::Fixed(v),
        Axis::Beta => match p.family {
            FamilyName::Vae => p.vae.as_mut().ok_or_else(unsupported)?.beta = v,
            FamilyName::Gan => p.integrand.as_mut().ok_or_else(unsupported)?.beta = v,
            FamilyName::Supervised => return Err(unsupported()),
        },
        Axis::Datasize => {
            let n = as_count(axis, v)?;
            p.dataset.synthetic.as_mut().ok_or_else(unsupported)?.points = n;
        }
    }
    c.validate()?;
    Ok(c)
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub exit_code: i32,
    pub lambda_n: Option<f64>,
    pub q: Option<f64>,
    pub iterations: Option<usize>,
    pub dist_from_init: Option<f64>,
}

impl SweepRow {
    fn from_record(value: f64, r: &Record) -> Self {
        let out = r.output.as_ref();
        SweepRow {
            value,
            exit_code: r.exit_code(),
            lambda_n: Some(r.ntk_initial.lambda_min),
            q: r.ledger().and_then(|l| l.q),
            iterations: out.map(|o| o.verdicts.actual_iterations),
            dist_from_init: out.and_then(|o| o.trace.dist_from_init.last().copied()),
        }
    }

    fn failed(value: f64) -> Self {
        SweepRow {
            value,
            exit_code: EXIT_ERROR,
            lambda_n: None,
            q: None,
            iterations: None,
            dist_from_init: None,
        }
    }
}

/// Runs every value, writes `<out>/<axis>_<value>/` and `<out>/summary.csv`.
/// Errors of individual points are reported on stderr and recorded with
/// exit code 1 rather than aborting the sweep.
pub fn sweep(cfg: &ExperimentConfig, axis: Axis, values: &[f64], out: &Path) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|&v| apply(cfg, axis, v))
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<SweepRow> = values
        .par_iter()
        .zip(configs)
        .map(|(&v, c)| {
            let dir = out.join(format!("{}_{v}", axis.as_str()));
            let res = execute(c, Mode::Run).and_then(|r| {
                write_all(&dir, &r)?;
                Ok(SweepRow::from_record(v, &r))
            });
            res.unwrap_or_else(|e| {
                eprintln!("{} = {v}: {e}", axis.as_str());
                SweepRow::failed(v)
            })
        })
        .collect();
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let path = out.join("summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["value", "lambda_n", "q", "iterations", "dist_from_init", "exit_code"])?;
    for r in &rows {
        w.write_record([
            fmt_num(Some(r.value)),
            fmt_num(r.lambda_n),
            fmt_num(r.q),
            r.iterations.map(|i| i.to_string()).unwrap_or_default(),
            fmt_num(r.dist_from_init),
            r.exit_code.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(rows)
}
