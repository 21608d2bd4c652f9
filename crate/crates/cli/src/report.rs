//! `report.json`, `trace.csv`, `bounds.csv` and `timings.json`.
//!
//! The report holds no wall-clock data, so identical configs and seeds
//! produce byte-identical files; timings go to the separate `timings.json`.

use std::fs;
use std::io::Write;
use std::path::Path;

use plgd_core::descent::{ConstantsLedger, Sense};
use plgd_core::smoothmap::{Ball, Constant, Provenance};
use serde::Serialize;

use crate::config::{CertificateConfig, DescentConfig, Format, ProblemConfig};
use crate::error::CliError;
use crate::experiment::{Mode, NtkSummary, Record, FD_TOL};

#[derive(Debug, Serialize)]
pub struct Report<'a> {
    pub command: &'static str,
    pub config: ConfigEcho<'a>,
    pub problem: ProblemInfo,
    pub finite_differences: FdInfo,
    pub certificates: Option<CertificateInfo>,
    pub ledger: Option<LedgerInfo>,
    pub ntk: NtkInfo,
    pub monitors: Vec<MonitorInfo>,
    pub verdicts: Vec<VerdictInfo>,
    pub iterations: Option<IterationInfo>,
    pub outcome: &'static str,
    pub exit_code: i32,
}

/// The parts of the config that determine the result; the output section
/// is left out so the same experiment written elsewhere reports the same.
#[derive(Debug, Serialize)]
pub struct ConfigEcho<'a> {
    pub problem: &'a ProblemConfig,
    pub certificates: &'a CertificateConfig,
    pub descent: &'a DescentConfig,
}

#[derive(Debug, Serialize)]
pub struct ProblemInfo {
    pub name: String,
    pub family: &'static str,
    pub model: String,
    pub integrand: &'static str,
    pub samples: usize,
    pub param_dim: usize,
    pub output_dim: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct FdInfo {
    pub map: f64,
    pub objective: f64,
    pub composite: f64,
    pub worst: f64,
    pub probes: usize,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct CertificateInfo {
    pub certified: bool,
    pub declared_ball_radius: Option<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ConstantInfo {
    pub value: f64,
    pub provenance: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<f64>,
}

impl From<Constant> for ConstantInfo {
    fn from(c: Constant) -> Self {
        let (provenance, samples, factor, raw) = match c.provenance {
            Provenance::Analytic => ("analytic", None, None, None),
            Provenance::AnalyticUpper => ("analytic_upper", None, None, None),
            Provenance::User => ("user", None, None, None),
            Provenance::Sampled { samples, factor, raw } => ("sampled", Some(samples), Some(factor), Some(raw)),
        };
        ConstantInfo {
            value: c.value,
            provenance,
            samples,
            factor,
            raw,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct LedgerInfo {
    /// `K_F`, `L_F`, `λ_F`.
    pub k_map: Option<ConstantInfo>,
    pub l_map: Option<ConstantInfo>,
    pub lambda_map: Option<ConstantInfo>,
    /// `L_f`, `λ_f`.
    pub l_obj: Option<ConstantInfo>,
    pub lambda_obj: Option<ConstantInfo>,
    pub f_star: Option<f64>,
    pub initial_loss: f64,
    pub initial_grad_norm: f64,
    pub initial_gap: Option<f64>,
    pub k_obj: Option<f64>,
    pub l: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha: f64,
    pub q: Option<f64>,
    pub k: Option<f64>,
    pub radius_required: Option<f64>,
    pub distance_bound: Option<f64>,
    pub analytic: bool,
    /// Largest relative disagreement between derived fields and their
    /// defining formulas.
    pub formula_defect: f64,
}

impl From<&ConstantsLedger> for LedgerInfo {
    fn from(l: &ConstantsLedger) -> Self {
        LedgerInfo {
            k_map: l.map.map(|m| m.bj.into()),
            l_map: l.map.map(|m| m.lj.into()),
            lambda_map: l.map.and_then(|m| m.uc).map(Into::into),
            l_obj: l.lg.map(Into::into),
            lambda_obj: l.pl.map(Into::into),
            f_star: l.f_star,
            initial_loss: l.initial_loss,
            initial_grad_norm: l.initial_grad_norm,
            initial_gap: l.initial_gap,
            k_obj: l.k_f,
            l: l.l,
            lambda: l.lambda,
            alpha: l.alpha,
            q: l.q,
            k: l.k,
            radius_required: l.radius_required,
            distance_bound: l.distance_bound(),
            analytic: l.analytic(),
            formula_defect: l.consistency_defect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct NtkPoint {
    pub iter: usize,
    pub lambda_min: f64,
}

#[derive(Debug, Serialize)]
pub struct NtkInfo {
    /// `λ_N` and `K_N²` at `θ₀`.
    pub initial: NtkSummaryInfo,
    pub r#final: Option<NtkSummaryInfo>,
    pub path: Vec<NtkPoint>,
}

#[derive(Debug, Serialize)]
pub struct NtkSummaryInfo {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub asymmetry: f64,
}

impl From<NtkSummary> for NtkSummaryInfo {
    fn from(s: NtkSummary) -> Self {
        NtkSummaryInfo {
            lambda_min: s.lambda_min,
            lambda_max: s.lambda_max,
            asymmetry: s.asymmetry,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct MonitorInfo {
    pub name: &'static str,
    pub sense: &'static str,
    pub outcome: &'static str,
    pub checks: usize,
    pub pass: usize,
    pub hypothesis_unmet: usize,
    pub warning: usize,
    pub violation: usize,
    pub not_evaluated: usize,
    /// Smallest `bound − measured` (or its mirror for lower bounds).
    pub worst_slack: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct VerdictInfo {
    pub name: &'static str,
    pub measured: Option<f64>,
    pub bound: Option<f64>,
    pub outcome: &'static str,
    pub note: String,
}

#[derive(Debug, Serialize)]
pub struct IterationInfo {
    pub predicted: Option<u64>,
    pub actual: usize,
    pub stop_gap: Option<f64>,
    pub final_loss: f64,
    pub final_gap: Option<f64>,
    pub dist_from_init: f64,
    pub diverged: bool,
    pub ball_sufficient: bool,
}

fn declared_radius(ball: &Option<Ball>) -> Option<f64> {
    ball.as_ref().map(|b| b.radius)
}

pub fn build_report(r: &Record) -> Report<'_> {
    use plgd_core::descent::Outcome as O;
    let p = &r.problem;
    let problem = ProblemInfo {
        name: p.name.clone(),
        family: p.family.as_str(),
        model: p.map.model().name().to_string(),
        integrand: p.objective.integrand().name(),
        samples: p.map.data().len(),
        param_dim: p.theta0.len(),
        output_dim: p.map.model().output_dim(),
        warnings: p.warnings.clone(),
    };
    let monitors = r
        .output
        .iter()
        .flat_map(|o| &o.verdicts.monitors)
        .map(|m| MonitorInfo {
            name: m.name,
            sense: match m.sense {
                Sense::AtMost => "at_most",
                Sense::AtLeast => "at_least",
            },
            outcome: m.outcome().as_str(),
            checks: m.checks.len(),
            pass: m.count(O::Pass),
            hypothesis_unmet: m.count(O::HypothesisUnmet),
            warning: m.count(O::Warning),
            violation: m.count(O::Violation),
            not_evaluated: m.count(O::NotEvaluated),
            worst_slack: m.worst_slack(),
        })
        .collect();
    let verdicts = r
        .output
        .iter()
        .flat_map(|o| &o.verdicts.finals)
        .map(|v| VerdictInfo {
            name: v.name,
            measured: v.measured,
            bound: v.bound,
            outcome: v.outcome.as_str(),
            note: v.note.clone(),
        })
        .collect();
    let iterations = r.output.as_ref().map(|o| {
        let t = &o.trace;
        IterationInfo {
            predicted: o.verdicts.predicted_iterations,
            actual: o.verdicts.actual_iterations,
            stop_gap: o.stop_gap,
            final_loss: *t.losses.last().unwrap_or(&f64::NAN),
            final_gap: t.gaps.last().copied(),
            dist_from_init: *t.dist_from_init.last().unwrap_or(&0.0),
            diverged: o.verdicts.diverged,
            ball_sufficient: o.verdicts.ball_sufficient,
        }
    });
    let outcome = if !r.fd_passed() {
        "fd-failed"
    } else if r.mode == Mode::Check {
        "checked"
    } else {
        r.outcome().as_str()
    };
    Report {
        command: match r.mode {
            Mode::Check => "check",
            Mode::Run => "run",
        },
        config: ConfigEcho {
            problem: &r.config.problem,
            certificates: &r.config.certificates,
            descent: &r.config.descent,
        },
        problem,
        finite_differences: FdInfo {
            map: r.fd.map,
            objective: r.fd.objective,
            composite: r.fd.composite,
            worst: r.fd.worst(),
            probes: r.fd.probes,
            tolerance: FD_TOL,
            passed: r.fd_passed(),
        },
        certificates: r.certified.as_ref().map(|c| CertificateInfo {
            certified: c.certified,
            declared_ball_radius: declared_radius(&c.declared_ball),
            notes: c.notes.clone(),
        }),
        ledger: r.ledger().map(Into::into),
        ntk: NtkInfo {
            initial: r.ntk_initial.into(),
            r#final: r.ntk_final.map(Into::into),
            path: r
                .ntk_path
                .iter()
                .map(|&(iter, lambda_min)| NtkPoint { iter, lambda_min })
                .collect(),
        },
        monitors,
        verdicts,
        iterations,
        outcome,
        exit_code: r.exit_code(),
    }
}

/// 17 significant digits, round-trip exact; empty for absent values.
pub fn fmt_num(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.16e}"),
        None => String::new(),
    }
}

pub const TRACE_HEADER: [&str; 9] = [
    "iter",
    "loss",
    "gap",
    "q_bound",
    "grad_norm",
    "step_norm",
    "step_bound",
    "dist_init",
    "dist_bound",
];

pub fn write_trace(path: &Path, r: &Record) -> Result<(), CliError> {
    let (Some(out), Some(ledger)) = (&r.output, r.ledger()) else {
        return Ok(());
    };
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACE_HEADER)?;
    for row in out.trace.rows(ledger) {
        w.write_record([
            row.iter.to_string(),
            fmt_num(Some(row.loss)),
            fmt_num(row.gap),
            fmt_num(row.q_bound),
            fmt_num(Some(row.grad_norm)),
            fmt_num(row.step_norm),
            fmt_num(row.step_bound),
            fmt_num(Some(row.dist_init)),
            fmt_num(row.dist_bound),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

pub fn write_bounds(path: &Path, r: &Record) -> Result<(), CliError> {
    let Some(out) = &r.output else {
        return Ok(());
    };
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["inequality", "iter", "measured", "bound", "outcome"])?;
    for m in &out.verdicts.monitors {
        for c in &m.checks {
            w.write_record([
                m.name.to_string(),
                c.iter.to_string(),
                fmt_num(Some(c.measured)),
                fmt_num(c.bound),
                c.outcome.as_str().to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct TimingEntry {
    stage: &'static str,
    seconds: f64,
}

/// Writes the requested formats into `dir`, creating it if needed.
pub fn write_all(dir: &Path, r: &Record) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let formats = &r.config.output.formats;
    if formats.contains(&Format::Report) {
        write_json(&dir.join("report.json"), &build_report(r))?;
    }
    if formats.contains(&Format::Trace) {
        write_trace(&dir.join("trace.csv"), r)?;
    }
    if formats.contains(&Format::Bounds) {
        write_bounds(&dir.join("bounds.csv"), r)?;
    }
    let timings: Vec<TimingEntry> = r
        .timings
        .0
        .iter()
        .map(|&(stage, seconds)| TimingEntry { stage, seconds })
        .collect();
    write_json(&dir.join("timings.json"), &timings)
}
