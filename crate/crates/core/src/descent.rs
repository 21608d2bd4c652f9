//! Fixed-step gradient descent on `f ∘ F` with the full constants ledger and
//! per-iterate checks of every inequality the convergence analysis relies on.
//!
//! With `F` `K_F`-BJ, `L_F`-LJ and `λ_F`-UC on a ball `D`, `f` `L_f`-LG and
//! `λ_f`-PL, the composition is `L = K_F² L_f + K_f L_F` smooth and
//! `λ = λ_F λ_f` PL, and descent with `α ∈ (0, 2/L)` contracts the gap by
//! `q = 1 + Lλα² − 2λα` per step while staying within `αK/(1 − √q)` of `x₀`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::smoothmap::{Ball, Constant, MapCertificate, SmoothMap};
use crate::space::{LinearOperator, WeightedSpace};

/// Divergence guard: abort once the gap exceeds this multiple of the initial gap.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
/// Default stopping gap, relative to the initial gap.
pub const DEFAULT_STOP_RATIO: f64 = 1e-10;
/// Relative tolerance on every monitored inequality.
pub const REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// `α = 1/L`, the minimizer of `q(α)`.
    Auto,
    Fixed(f64),
}

/// Every constant of the convergence analysis, evaluated at `x₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsLedger {
    /// `K_F`, `L_F`, `λ_F`.
    pub map: Option<MapCertificate>,
    /// `L_f`.
    pub lg: Option<Constant>,
    /// `λ_f`.
    pub pl: Option<Constant>,
    pub f_star: Option<f64>,
    pub initial_loss: f64,
    /// `‖∇(f∘F)(x₀)‖`.
    pub initial_grad_norm: f64,
    pub initial_gap: Option<f64>,
    /// `K_f = √(2 L_f (f(F(x₀)) − f_*))`.
    pub k_f: Option<f64>,
    /// `L = K_F² L_f + K_f L_F`.
    pub l: Option<f64>,
    /// `λ = λ_F λ_f`.
    pub lambda: Option<f64>,
    pub alpha: f64,
    /// `q = 1 + Lλα² − 2λα`.
    pub q: Option<f64>,
    /// `K = √(2 L (f(F(x₀)) − f_*))`.
    pub k: Option<f64>,
    /// `max{αK/(1−√q) + (1/L + α)K, ‖∇(f∘F)(x₀)‖/L}`.
    pub radius_required: Option<f64>,
}

impl ConstantsLedger {
    /// True when every constant that enters the ledger is a proven bound.
    pub fn analytic(&self) -> bool {
        self.map.as_ref().is_some_and(|m| m.is_analytic())
            && self.lg.is_some_and(|c| c.provenance.is_analytic())
            && self.pl.is_none_or(|c| c.provenance.is_analytic())
    }

    /// `αK/(1 − √q)`.
    pub fn distance_bound(&self) -> Option<f64> {
        let (q, k) = (self.q?, self.k?);
        Some(self.alpha * k / (1.0 - libm::sqrt(q)))
    }

    /// `⌈log(stop_gap/gap₀)/log q⌉`, the iteration count after which the
    /// guaranteed gap is below `stop_gap`.
    pub fn predicted_iterations(&self, stop_gap: f64) -> Option<u64> {
        let (q, gap0) = (self.q?, self.initial_gap?);
        if gap0 <= stop_gap {
            return Some(0);
        }
        if q <= 0.0 {
            return Some(1);
        }
        if stop_gap <= 0.0 {
            return None;
        }
        let n = libm::ceil(libm::log(stop_gap / gap0) / libm::log(q));
        Some(n.max(0.0) as u64)
    }

    /// Checks the derived fields against their defining formulas, returning
    /// the largest discrepancy relative to the magnitude of the terms.
    pub fn consistency_defect(&self) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        if let (Some(l), Some(lambda), Some(q)) = (self.l, self.lambda, self.q) {
            let a = self.alpha;
            let (t1, t2) = (l * lambda * a * a, 2.0 * lambda * a);
            let expect = 1.0 + t1 - t2;
            let snapped = expect <= 8.0 * f64::EPSILON * t1.max(t2).max(1.0);
            worst = worst.max(if snapped {
                q
            } else {
                (q - expect).abs() / t1.max(t2).max(1.0)
            });
        }
        if let (Some(m), Some(lg), Some(k_f), Some(l)) = (&self.map, self.lg, self.k_f, self.l) {
            worst = worst.max(rel(l, m.bj.value * m.bj.value * lg.value + k_f * m.lj.value));
        }
        worst
    }
}

/// `q = 1 + Lλα² − 2λα`, snapped to 0 when it lies within the round-off of
/// its own terms (it is mathematically ≥ `(1 − λα)² ≥ 0` for `λ ≤ L`).
/// Without this, `q ≈ 1e-16` in a tight case turns into `√q ≈ 1e-8` in every
/// distance bound.
pub fn contraction(l: f64, lambda: f64, alpha: f64) -> f64 {
    let (a, b) = (l * lambda * alpha * alpha, 2.0 * lambda * alpha);
    let q = 1.0 + a - b;
    if q <= 8.0 * f64::EPSILON * a.max(b).max(1.0) {
        0.0
    } else {
        q
    }
}

fn dist_between(space: &WeightedSpace, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    space.nrm(&d)
}

/// Loss `(f∘F)(x)` and gradient `∂F(x)* ∇f(F(x))`.
pub fn composite_gradient<F, O>(map: &F, obj: &O, x: &[f64]) -> Result<(f64, Vec<f64>)>
where
    F: SmoothMap + ?Sized,
    O: Objective + ?Sized,
{
    if map.codomain() != obj.space() {
        return Err(Error::InvalidSpace("map codomain differs from objective domain".into()));
    }
    map.domain().check(x)?;
    let h = map.value(x)?;
    let loss = obj.value(&h)?;
    let g = map.jacobian(x)?.adjoint_apply(&obj.gradient(&h)?);
    if let Some(k) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(
            format!("gradient coordinate {k}"),
            format!("non-finite value {}", g[k]),
        ));
    }
    if !loss.is_finite() {
        return Err(Error::numeric("loss", format!("non-finite value {loss}")));
    }
    Ok((loss, g))
}

/// `x − α ∂F(x)* ∇f(F(x))`.
pub fn gd_step<F, O>(map: &F, obj: &O, x: &[f64], alpha: f64) -> Result<Vec<f64>>
where
    F: SmoothMap + ?Sized,
    O: Objective + ?Sized,
{
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!("step size {alpha} must be ≥ 0")));
    }
    let (_, g) = composite_gradient(map, obj, x)?;
    Ok(x.iter().zip(&g).map(|(x, g)| x - alpha * g).collect())
}

/// Assembles the ledger. `cert` carries the map constants; `L_f`, `λ_f` and
/// `f_*` come from the objective.
pub fn build_ledger<F, O>(
    map: &F,
    obj: &O,
    x0: &[f64],
    cert: &MapCertificate,
    step: StepSize,
) -> Result<ConstantsLedger>
where
    F: SmoothMap + ?Sized,
    O: Objective + ?Sized,
{
    let lg = obj
        .lg()
        .ok_or_else(|| Error::Unsupported("objective has no LG constant".into()))?;
    let f_star = obj
        .infimum()
        .ok_or_else(|| Error::Unsupported("objective has no known infimum".into()))?;
    let (loss, g) = composite_gradient(map, obj, x0)?;
    let grad_norm = map.domain().nrm(&g);
    // Round-off can put the loss a hair below f_* at an optimum.
    let gap = (loss - f_star).max(0.0);
    let k_f = libm::sqrt(2.0 * lg.value * gap);
    let l = cert.bj.value * cert.bj.value * lg.value + k_f * cert.lj.value;
    let pl = obj.pl();
    let lambda = match (cert.uc, pl) {
        (Some(uc), Some(pl)) => Some(uc.value * pl.value),
        _ => None,
    };
    if let Some(lambda) = lambda {
        if lambda > l * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "PL constant λ = {lambda} exceeds smoothness constant L = {l}"
            )));
        }
    }
    let alpha = match step {
        StepSize::Auto => {
            if l <= 0.0 {
                return Err(Error::Unsupported(
                    "L = 0: the composition is affine-linear and no step size is selected automatically".into(),
                ));
            }
            1.0 / l
        }
        StepSize::Fixed(a) => {
            if !(a > 0.0 && (l <= 0.0 || a < 2.0 / l)) {
                return Err(Error::InvalidConfig(format!(
                    "step size {a} outside (0, 2/L) with L = {l}"
                )));
            }
            a
        }
    };
    let k = libm::sqrt(2.0 * l * gap);
    let q = lambda.map(|lambda| contraction(l, lambda, alpha));
    let radius_required = q.map(|q| {
        let trust = alpha * k / (1.0 - libm::sqrt(q)) + (1.0 / l + alpha) * k;
        trust.max(grad_norm / l)
    });
    Ok(ConstantsLedger {
        map: Some(*cert),
        lg: Some(lg),
        pl,
        f_star: Some(f_star),
        initial_loss: loss,
        initial_grad_norm: grad_norm,
        initial_gap: Some(gap),
        k_f: Some(k_f),
        l: Some(l),
        lambda,
        alpha,
        q,
        k: Some(k),
        radius_required,
    })
}

/// Ledger for a run without certificates: only the step size is known, and
/// only measurements are recorded.
pub fn uncertified_ledger<F, O>(map: &F, obj: &O, x0: &[f64], alpha: f64) -> Result<ConstantsLedger>
where
    F: SmoothMap + ?Sized,
    O: Objective + ?Sized,
{
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!("step size {alpha} must be positive")));
    }
    let (loss, g) = composite_gradient(map, obj, x0)?;
    let f_star = obj.infimum();
    Ok(ConstantsLedger {
        map: None,
        lg: obj.lg(),
        pl: obj.pl(),
        f_star,
        initial_loss: loss,
        initial_grad_norm: map.domain().nrm(&g),
        initial_gap: f_star.map(|f| (loss - f).max(0.0)),
        k_f: None,
        l: None,
        lambda: None,
        alpha,
        q: None,
        k: None,
        radius_required: None,
    })
}

/// Outcome of one checked inequality, ordered from best to worst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    Pass,
    /// The quantity could not be computed for this problem.
    NotEvaluated,
    /// The inequality failed (or has no bound) and a hypothesis behind it is
    /// not established.
    HypothesisUnmet,
    /// The inequality failed under sampled (heuristic) certificates.
    Warning,
    /// The inequality failed with all hypotheses established analytically.
    Violation,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::NotEvaluated => "not-evaluated",
            Outcome::HypothesisUnmet => "hypothesis-unmet",
            Outcome::Warning => "warning",
            Outcome::Violation => "violation",
        }
    }
}

/// Which side of the bound the measured value must lie on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub iter: usize,
    pub measured: f64,
    pub bound: Option<f64>,
    pub outcome: Outcome,
}

/// One inequality tracked along the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Monitor {
    pub name: &'static str,
    pub sense: Sense,
    pub checks: Vec<Check>,
}

impl Monitor {
    fn new(name: &'static str, sense: Sense) -> Self {
        Monitor {
            name,
            sense,
            checks: Vec::new(),
        }
    }

    pub fn outcome(&self) -> Outcome {
        self.checks.iter().map(|c| c.outcome).max().unwrap_or(Outcome::Pass)
    }

    pub fn count(&self, outcome: Outcome) -> usize {
        self.checks.iter().filter(|c| c.outcome == outcome).count()
    }

    /// Largest `measured − bound` (for `AtMost`) or `bound − measured`
    /// (for `AtLeast`) over evaluated checks.
    pub fn worst_slack(&self) -> Option<f64> {
        self.checks
            .iter()
            .filter_map(|c| {
                c.bound.map(|b| match self.sense {
                    Sense::AtMost => c.measured - b,
                    Sense::AtLeast => b - c.measured,
                })
            })
            .reduce(f64::max)
    }
}

/// A single end-of-run verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: &'static str,
    pub measured: Option<f64>,
    pub bound: Option<f64>,
    pub outcome: Outcome,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundVerdicts {
    pub monitors: Vec<Monitor>,
    pub finals: Vec<Verdict>,
    /// Every certified constant is analytic.
    pub analytic: bool,
    /// The declared ball is at least the required trust radius.
    pub ball_sufficient: bool,
    pub diverged: bool,
    pub predicted_iterations: Option<u64>,
    pub actual_iterations: usize,
}

impl BoundVerdicts {
    pub fn outcome(&self) -> Outcome {
        self.monitors
            .iter()
            .map(Monitor::outcome)
            .chain(self.finals.iter().map(|v| v.outcome))
            .max()
            .unwrap_or(Outcome::Pass)
    }

    pub fn monitor(&self, name: &str) -> Option<&Monitor> {
        self.monitors.iter().find(|m| m.name == name)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.finals.iter().find(|v| v.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DescentTrace {
    pub iterates: Vec<Vec<f64>>,
    pub losses: Vec<f64>,
    /// `loss − f_*`, empty when `f_*` is unknown.
    pub gaps: Vec<f64>,
    pub grad_norms: Vec<f64>,
    /// `‖x_{i+1} − x_i‖`, one shorter than `iterates`.
    pub step_norms: Vec<f64>,
    pub dist_from_init: Vec<f64>,
}

impl DescentTrace {
    pub fn iterations(&self) -> usize {
        self.step_norms.len()
    }

    pub fn last(&self) -> &[f64] {
        self.iterates.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// One row per iterate with the bounds that apply to it.
    pub fn rows(&self, ledger: &ConstantsLedger) -> Vec<TraceRow> {
        let dist_bound = ledger.distance_bound();
        (0..self.iterates.len())
            .map(|i| {
                let qi = ledger.q.map(|q| pow_i(q, i));
                TraceRow {
                    iter: i,
                    loss: self.losses[i],
                    gap: self.gaps.get(i).copied(),
                    q_bound: qi.zip(ledger.initial_gap).map(|(qi, g)| qi * g),
                    grad_norm: self.grad_norms[i],
                    step_norm: self.step_norms.get(i).copied(),
                    step_bound: ledger.q.zip(ledger.k).map(|(q, k)| ledger.alpha * pow_half(q, i) * k),
                    dist_init: self.dist_from_init[i],
                    dist_bound,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub loss: f64,
    pub gap: Option<f64>,
    pub q_bound: Option<f64>,
    pub grad_norm: f64,
    pub step_norm: Option<f64>,
    pub step_bound: Option<f64>,
    pub dist_init: f64,
    pub dist_bound: Option<f64>,
}

/// `q^i` with `0⁰ = 1`.
fn pow_i(q: f64, i: usize) -> f64 {
    if i == 0 {
        1.0
    } else {
        libm::pow(q, i as f64)
    }
}

/// `q^{i/2}` with `0⁰ = 1`.
fn pow_half(q: f64, i: usize) -> f64 {
    if i == 0 {
        1.0
    } else {
        libm::pow(q, 0.5 * i as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub max_iter: usize,
    /// Absolute stopping gap; defaults to `1e-10 · gap₀`.
    pub stop_gap: Option<f64>,
    /// The region `D` on which the certificates were established. `None`
    /// means the certificates hold on the whole space.
    pub declared_ball: Option<Ball>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            max_iter: 10_000,
            stop_gap: None,
            declared_ball: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trace: DescentTrace,
    pub verdicts: BoundVerdicts,
    pub stop_gap: Option<f64>,
}

/// Hypothesis context shared by the classification of every check.
struct Context {
    analytic: bool,
    ball_sufficient: bool,
}

impl Context {
    /// `local`: the point(s) the check involves lie in `D`.
    /// `global`: the check is a trajectory-level consequence that also needs
    /// the trust ball to fit inside `D`.
    fn classify(&self, holds: bool, local: bool, global: bool) -> Outcome {
        if holds {
            Outcome::Pass
        } else if !local || (global && !self.ball_sufficient) {
            Outcome::HypothesisUnmet
        } else if self.analytic {
            Outcome::Violation
        } else {
            Outcome::Warning
        }
    }
}

fn holds(sense: Sense, measured: f64, bound: f64, tol: f64) -> bool {
    match sense {
        Sense::AtMost => measured <= bound + tol,
        Sense::AtLeast => measured >= bound - tol,
    }
}

const Q_DECAY: &str = "q_decay";
const STEP_NORM: &str = "step_norm";
const STEP_DECAY: &str = "step_decay";
const COMPOSITION_PL: &str = "composition_pl";
const COMPOSITION_DESCENT: &str = "composition_lg_descent";
const COMPOSITION_TAYLOR: &str = "composition_lg_taylor";
const TRIANGLE: &str = "distance_triangle";
const TRUST_BALL: &str = "trust_ball";

/// Runs descent from `x0` with the ledger's step size, monitoring every
/// inequality at every iterate.
pub fn run<F, O>(map: &F, obj: &O, x0: &[f64], ledger: &ConstantsLedger, opts: &RunOptions) -> Result<RunOutput>
where
    F: SmoothMap + ?Sized,
    O: Objective + ?Sized,
{
    if opts.max_iter == 0 {
        return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
    }
    let space = map.domain().clone();
    if let Some(b) = &opts.declared_ball {
        space.check(&b.center)?;
    }
    let alpha = ledger.alpha;
    let gap0 = ledger.initial_gap;
    let stop_gap = opts.stop_gap.or(gap0.map(|g| DEFAULT_STOP_RATIO * g));
    let analytic = ledger.analytic();
    let ball_sufficient = match (&opts.declared_ball, ledger.radius_required) {
        (None, _) => true,
        (Some(b), Some(r)) => b.radius >= r && dist_between(&space, &b.center, x0) <= b.radius - r + 1e-12 * r,
        (Some(_), None) => false,
    };
    let ctx = Context {
        analytic,
        ball_sufficient,
    };
    let inside = |x: &[f64]| -> bool {
        opts.declared_ball
            .as_ref()
            .is_none_or(|b| dist_between(&space, x, &b.center) <= b.radius * (1.0 + 1e-12))
    };
    let f_star = ledger.f_star;
    // Absolute slack for inequalities between losses: relative tolerance on
    // the initial gap plus a round-off floor on the loss magnitude.
    let loss_tol = REL_TOL * gap0.unwrap_or(0.0)
        + 16.0 * f64::EPSILON * ledger.initial_loss.abs().max(f_star.unwrap_or(0.0).abs());
    let norm_tol = 1e-12 * (alpha * ledger.k.unwrap_or(0.0) + ledger.initial_grad_norm * alpha);

    let mut trace = DescentTrace::default();
    let mut mons = [
        Monitor::new(Q_DECAY, Sense::AtMost),
        Monitor::new(STEP_NORM, Sense::AtMost),
        Monitor::new(STEP_DECAY, Sense::AtMost),
        Monitor::new(COMPOSITION_PL, Sense::AtLeast),
        Monitor::new(COMPOSITION_DESCENT, Sense::AtMost),
        Monitor::new(COMPOSITION_TAYLOR, Sense::AtMost),
        Monitor::new(TRIANGLE, Sense::AtMost),
        Monitor::new(TRUST_BALL, Sense::AtMost),
    ];
    let [q_decay, step_norm, step_decay, comp_pl, comp_descent, comp_taylor, triangle, trust] = &mut mons;

    let mut x = x0.to_vec();
    let (mut loss, mut g) = composite_gradient(map, obj, &x)?;
    let mut path_len = 0.0;
    let mut diverged = false;
    let mut all_inside = inside(&x);
    let mut i = 0usize;
    loop {
        let gap = f_star.map(|f| loss - f);
        let gn = space.nrm(&g);
        let dist = dist_between(&space, &x, x0);
        let here_inside = inside(&x);
        all_inside &= here_inside;
        trace.iterates.push(x.clone());
        trace.losses.push(loss);
        if let Some(gap) = gap {
            trace.gaps.push(gap);
        }
        trace.grad_norms.push(gn);
        trace.dist_from_init.push(dist);

        // Gap against q^i · gap₀.
        if let Some(gap) = gap {
            let bound = ledger.q.zip(gap0).map(|(q, g0)| pow_i(q, i) * g0);
            let outcome = match bound {
                Some(b) => ctx.classify(holds(Sense::AtMost, gap, b, loss_tol), all_inside, true),
                None => Outcome::HypothesisUnmet,
            };
            q_decay.checks.push(Check {
                iter: i,
                measured: gap,
                bound,
                outcome,
            });

            // ½‖∇‖² ≥ λ · gap.
            let half_sq = 0.5 * gn * gn;
            let bound = ledger.lambda.map(|l| l * gap);
            let outcome = match bound {
                Some(b) => ctx.classify(
                    holds(Sense::AtLeast, half_sq, b, ledger.lambda.unwrap() * loss_tol),
                    here_inside,
                    false,
                ),
                None => Outcome::HypothesisUnmet,
            };
            comp_pl.checks.push(Check {
                iter: i,
                measured: half_sq,
                bound,
                outcome,
            });

            // ½‖∇‖² ≤ L · gap.
            if let Some(l) = ledger.l {
                let b = l * gap;
                comp_descent.checks.push(Check {
                    iter: i,
                    measured: half_sq,
                    bound: Some(b),
                    outcome: ctx.classify(holds(Sense::AtMost, half_sq, b, l * loss_tol), here_inside, false),
                });
            }
        }

        // ‖x_i − x₀‖ ≤ Σ_{j<i} ‖x_{j+1} − x_j‖.
        triangle.checks.push(Check {
            iter: i,
            measured: dist,
            bound: Some(path_len),
            outcome: if dist <= path_len * (1.0 + 1e-12) + 1e-300 || i == 0 {
                Outcome::Pass
            } else {
                Outcome::Violation
            },
        });

        // ‖x_i − x₀‖ against the required trust radius.
        let outcome = match ledger.radius_required {
            Some(r) => ctx.classify(holds(Sense::AtMost, dist, r, norm_tol), true, true),
            None => Outcome::HypothesisUnmet,
        };
        trust.checks.push(Check {
            iter: i,
            measured: dist,
            bound: ledger.radius_required,
            outcome,
        });

        if let (Some(gap), Some(g0)) = (gap, gap0) {
            if gap > DIVERGENCE_FACTOR * g0 && g0 > 0.0 {
                diverged = true;
                break;
            }
        }
        let reached = match (gap, stop_gap) {
            (Some(gap), Some(s)) => gap <= s,
            _ => false,
        };
        if reached || i >= opts.max_iter {
            break;
        }

        let next: Vec<f64> = x.iter().zip(&g).map(|(x, g)| x - alpha * g).collect();
        let (next_loss, next_g) = composite_gradient(map, obj, &next).map_err(|e| match e {
            Error::Numeric { location, detail } => Error::Numeric {
                location: format!("iterate {} ({location})", i + 1),
                detail,
            },
            other => other,
        })?;
        let step = dist_between(&space, &next, &x);
        let next_inside = inside(&next);

        // ‖x_{i+1} − x_i‖ ≤ α q^{i/2} K.
        let bound = ledger.q.zip(ledger.k).map(|(q, k)| alpha * pow_half(q, i) * k);
        let outcome = match bound {
            Some(b) => ctx.classify(holds(Sense::AtMost, step, b, norm_tol), all_inside, true),
            None => Outcome::HypothesisUnmet,
        };
        step_norm.checks.push(Check {
            iter: i,
            measured: step,
            bound,
            outcome,
        });

        if let Some(fs) = f_star {
            let (gap, next_gap) = (loss - fs, next_loss - fs);
            // gap_{i+1} ≤ q · gap_i.
            let bound = ledger.q.map(|q| q * gap);
            let outcome = match bound {
                Some(b) => ctx.classify(
                    holds(Sense::AtMost, next_gap, b, loss_tol),
                    here_inside && next_inside,
                    false,
                ),
                None => Outcome::HypothesisUnmet,
            };
            step_decay.checks.push(Check {
                iter: i,
                measured: next_gap,
                bound,
                outcome,
            });
        }

        // |h(x_{i+1}) − h(x_i) − ⟨∇h(x_i), Δ⟩| ≤ (L/2)‖Δ‖², with Δ = −α∇h(x_i).
        if let Some(l) = ledger.l {
            let lhs = (next_loss - loss + alpha * gn * gn).abs();
            let b = 0.5 * l * step * step;
            comp_taylor.checks.push(Check {
                iter: i,
                measured: lhs,
                bound: Some(b),
                outcome: ctx.classify(
                    holds(Sense::AtMost, lhs, b, loss_tol),
                    here_inside && next_inside,
                    false,
                ),
            });
        }

        trace.step_norms.push(step);
        path_len += step;
        x = next;
        loss = next_loss;
        g = next_g;
        i += 1;
    }

    let mut finals = Vec::new();
    let last = trace.last().to_vec();
    let dist = dist_between(&space, &last, x0);

    // ‖x_* − x₀‖ ≤ αK/(1 − √q).
    finals.push(match ledger.distance_bound() {
        Some(b) => Verdict {
            name: "distance",
            measured: Some(dist),
            bound: Some(b),
            outcome: ctx.classify(holds(Sense::AtMost, dist, b, norm_tol), all_inside, true),
            note: String::new(),
        },
        None => Verdict {
            name: "distance",
            measured: Some(dist),
            bound: None,
            outcome: Outcome::HypothesisUnmet,
            note: "no PL constant for the composition".into(),
        },
    });

    // ‖x_* − x₀‖ ≤ α K_F √(L L_f) ‖x̂_* − x₀‖ / (1 − √q).
    let closest = closest_optimum(map, obj, x0)?;
    finals.push(match (&closest, ledger.q, ledger.l, ledger.lg, &ledger.map) {
        (Some(xh), Some(q), Some(l), Some(lg), Some(m)) => {
            let b =
                alpha * m.bj.value * libm::sqrt(l * lg.value) * dist_between(&space, xh, x0) / (1.0 - libm::sqrt(q));
            Verdict {
                name: "closest_optimum",
                measured: Some(dist),
                bound: Some(b),
                outcome: ctx.classify(holds(Sense::AtMost, dist, b, norm_tol), all_inside, true),
                note: String::new(),
            }
        }
        (None, ..) => Verdict {
            name: "closest_optimum",
            measured: Some(dist),
            bound: None,
            outcome: Outcome::NotEvaluated,
            note: "closest optimum has no closed form for this problem".into(),
        },
        _ => Verdict {
            name: "closest_optimum",
            measured: Some(dist),
            bound: None,
            outcome: Outcome::HypothesisUnmet,
            note: "ledger lacks q, L or K_F".into(),
        },
    });

    finals.push(Verdict {
        name: "ball",
        measured: Some(trace.dist_from_init.iter().copied().fold(0.0, f64::max)),
        bound: opts.declared_ball.as_ref().map(|b| b.radius),
        outcome: if all_inside {
            Outcome::Pass
        } else {
            Outcome::HypothesisUnmet
        },
        note: if ball_sufficient {
            String::new()
        } else {
            "declared ball is smaller than the required trust radius".into()
        },
    });

    let final_gap = trace.gaps.last().copied();
    let converged = final_gap.zip(stop_gap).is_some_and(|(g, s)| g <= s);
    finals.push(Verdict {
        name: "converged",
        measured: final_gap,
        bound: stop_gap,
        outcome: match (final_gap, stop_gap) {
            (Some(_), Some(_)) if converged => Outcome::Pass,
            (Some(_), Some(_)) if ledger.q.is_none() => Outcome::HypothesisUnmet,
            (Some(_), Some(s)) => {
                // Not reaching the gap in max_iter is only a failure when the
                // guarantee says it should have been reached.
                let due = ledger
                    .predicted_iterations(s)
                    .is_some_and(|p| p as usize <= trace.iterations());
                if due || diverged {
                    ctx.classify(false, all_inside, true)
                } else {
                    Outcome::NotEvaluated
                }
            }
            _ => Outcome::NotEvaluated,
        },
        note: if diverged {
            "diverged: gap exceeded 10× its initial value".into()
        } else {
            String::new()
        },
    });

    let predicted = stop_gap.and_then(|s| ledger.predicted_iterations(s));
    let actual = trace.iterations();
    finals.push(Verdict {
        name: "iterations",
        measured: Some(actual as f64),
        bound: predicted.map(|p| p as f64),
        outcome: match predicted {
            Some(p) if converged => ctx.classify(actual as u64 <= p, all_inside, true),
            Some(_) => Outcome::NotEvaluated,
            None => Outcome::HypothesisUnmet,
        },
        note: String::new(),
    });

    Ok(RunOutput {
        trace,
        verdicts: BoundVerdicts {
            monitors: mons.into_iter().collect(),
            finals,
            analytic,
            ball_sufficient,
            diverged,
            predicted_iterations: predicted,
            actual_iterations: actual,
        },
        stop_gap,
    })
}

/// `x̂_* = argmin{‖x − x₀‖ : (f∘F)(x) = f_*}` for affine `F` and an objective
/// with a single known minimizer `h*`: the minimum-norm solution of
/// `∂F (x − x₀) = h* − F(x₀)` in the domain metric. `None` when the
/// problem is outside that family or the system has no exact solution.
pub fn closest_optimum<F, O>(map: &F, obj: &O, x0: &[f64]) -> Result<Option<Vec<f64>>>
where
    F: SmoothMap + ?Sized,
    O: Objective + ?Sized,
{
    let (Some((op, _)), Some(h_star)) = (map.affine_part(), obj.unique_minimizer()) else {
        return Ok(None);
    };
    let dom = map.domain();
    let cod = map.codomain();
    let r: Vec<f64> = h_star.iter().zip(map.value(x0)?).map(|(h, f)| h - f).collect();
    // Work in orthonormal coordinates u = D^{1/2}(x − x₀), s = C^{1/2} r.
    let dw = dom.weights();
    let cw = cod.weights();
    let mut b = op.matrix().clone();
    for (j, w) in dw.iter().enumerate() {
        b.column_mut(j).scale_mut(1.0 / libm::sqrt(*w));
    }
    for (i, w) in cw.iter().enumerate() {
        b.row_mut(i).scale_mut(libm::sqrt(*w));
    }
    let s = DVector::from_iterator(r.len(), r.iter().zip(cw).map(|(r, w)| r * libm::sqrt(*w)));
    let scale = b.amax().max(1.0);
    let pinv = pseudo_inverse(&b, 1e-12 * scale)?;
    let u = &pinv * &s;
    let residual = (&b * &u - &s).norm();
    if residual > 1e-9 * (1.0 + s.norm()) {
        return Ok(None);
    }
    Ok(Some(
        x0.iter()
            .zip(u.iter().zip(dw))
            .map(|(x, (u, w))| x + u / libm::sqrt(*w))
            .collect(),
    ))
}

fn pseudo_inverse(b: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
    b.clone()
        .svd(true, true)
        .pseudo_inverse(eps)
        .map_err(|e| Error::numeric("pseudo-inverse", e))
}
