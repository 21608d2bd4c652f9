//! Pointwise losses `ι(x, z)` and the integral functional
//! `I_ι(f) = ∫ ι(x, f(x)) dμ(x)` they induce on `L²(μ, ℝˡ)`.
//!
//! The gradient of `I_ι` in the μ-weighted metric is pointwise:
//! `∇I_ι(f)_i = ∇_z ι(x_i, f_i)`. LG and PL constants of the integrand carry
//! over unchanged, and `I_ι* = Σ_i μ_i inf_z ι(x_i, z)`.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::smoothmap::Constant;
use crate::space::WeightedSpace;

/// Per-sample densities `(dρ/dμ, dγ/dμ)` of the real and generated
/// distributions against the mixture `μ = ½(ρ + γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mixture {
    pub real: f64,
    pub generated: f64,
}

impl Mixture {
    pub const REAL: Mixture = Mixture {
        real: 2.0,
        generated: 0.0,
    };
    pub const GENERATED: Mixture = Mixture {
        real: 0.0,
        generated: 2.0,
    };
}

/// One atom of the empirical measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Option<Vec<f64>>,
    pub mixture: Option<Mixture>,
}

impl Sample {
    pub fn new(input: Vec<f64>) -> Self {
        Sample {
            input,
            target: None,
            mixture: None,
        }
    }

    pub fn with_target(input: Vec<f64>, target: Vec<f64>) -> Self {
        Sample {
            input,
            target: Some(target),
            mixture: None,
        }
    }

    fn target(&self) -> Result<&[f64]> {
        self.target
            .as_deref()
            .ok_or_else(|| Error::InvalidDataset("integrand needs a target on every sample".into()))
    }

    fn mixture(&self) -> Result<Mixture> {
        self.mixture
            .ok_or_else(|| Error::InvalidDataset("integrand needs real/generated densities on every sample".into()))
    }
}

/// Empirical probability measure: atoms with positive masses summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    weights: Vec<f64>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, weights: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidDataset("dataset is empty".into()));
        }
        if samples.len() != weights.len() {
            return Err(Error::InvalidDataset(format!(
                "{} samples but {} weights",
                samples.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidDataset(format!("weight {w} is not positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDataset(format!("weights sum to {total}, expected 1")));
        }
        Ok(Dataset { samples, weights })
    }

    pub fn uniform(samples: Vec<Sample>) -> Result<Self> {
        let n = samples.len();
        Self::new(samples, vec![1.0 / n as f64; n])
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `L²(μ, ℝˡ)` over this measure.
    pub fn feature_space(&self, output_dim: usize) -> Result<WeightedSpace> {
        WeightedSpace::empirical(&self.weights, output_dim)
    }
}

/// A pointwise loss `ι(x, ·): ℝˡ → ℝ`, differentiable in `z`.
pub trait Integrand: Send + Sync {
    fn output_dim(&self) -> usize;
    fn value(&self, sample: &Sample, z: &[f64]) -> Result<f64>;
    fn gradient(&self, sample: &Sample, z: &[f64]) -> Result<Vec<f64>>;

    /// `L_ι`, uniform over samples.
    fn lg(&self) -> Option<Constant> {
        None
    }

    /// `λ_ι`, uniform over samples.
    fn pl(&self) -> Option<Constant> {
        None
    }

    /// `inf_z ι(x, z)`.
    fn pointwise_inf(&self, _sample: &Sample) -> Option<f64> {
        None
    }

    /// The unique pointwise minimizer, when there is one.
    fn pointwise_minimizer(&self, _sample: &Sample) -> Option<Vec<f64>> {
        None
    }

    /// False when the infimum is only approached, never reached.
    fn infimum_attained(&self) -> bool {
        true
    }

    fn name(&self) -> &'static str;
}

fn check_len(z: &[f64], l: usize) -> Result<()> {
    if z.len() != l {
        return Err(Error::DimensionMismatch {
            expected: l,
            got: z.len(),
        });
    }
    Ok(())
}

/// Gaussian likelihood with fixed variance:
/// `ι(x, z) = ½ Σ ((t(x)_i − z_i)/σ_i)² + √(2π) Π σ_i`.
/// For constant `σ` this is least squares.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    sigma: Vec<f64>,
}

impl LeastSquares {
    pub fn new(sigma: Vec<f64>) -> Result<Self> {
        if sigma.is_empty() {
            return Err(Error::InvalidConfig("σ must have at least one entry".into()));
        }
        if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidConfig(format!("σ entry {s} must be positive")));
        }
        Ok(LeastSquares { sigma })
    }

    pub fn unit(dim: usize) -> Self {
        LeastSquares { sigma: vec![1.0; dim] }
    }

    fn constant(&self) -> f64 {
        libm::sqrt(2.0 * PI) * self.sigma.iter().product::<f64>()
    }
}

impl Integrand for LeastSquares {
    fn output_dim(&self) -> usize {
        self.sigma.len()
    }

    fn value(&self, sample: &Sample, z: &[f64]) -> Result<f64> {
        check_len(z, self.sigma.len())?;
        let t = sample.target()?;
        check_len(t, self.sigma.len())?;
        let quad: f64 = t
            .iter()
            .zip(z)
            .zip(&self.sigma)
            .map(|((t, z), s)| ((t - z) / s).powi(2))
            .sum();
        Ok(0.5 * quad + self.constant())
    }

    fn gradient(&self, sample: &Sample, z: &[f64]) -> Result<Vec<f64>> {
        check_len(z, self.sigma.len())?;
        let t = sample.target()?;
        check_len(t, self.sigma.len())?;
        Ok(t.iter()
            .zip(z)
            .zip(&self.sigma)
            .map(|((t, z), s)| (z - t) / (s * s))
            .collect())
    }

    fn lg(&self) -> Option<Constant> {
        let m = self.sigma.iter().fold(f64::INFINITY, |a, s| a.min(*s));
        Some(Constant::analytic(1.0 / (m * m)))
    }

    fn pl(&self) -> Option<Constant> {
        let m = self.sigma.iter().fold(0.0f64, |a, s| a.max(*s));
        Some(Constant::analytic(1.0 / (m * m)))
    }

    fn pointwise_inf(&self, _sample: &Sample) -> Option<f64> {
        Some(self.constant())
    }

    fn pointwise_minimizer(&self, sample: &Sample) -> Option<Vec<f64>> {
        sample.target.clone()
    }

    fn name(&self) -> &'static str {
        "least_squares"
    }
}

/// Normalizing term of the learned-variance Gaussian likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `√(2π) e^{Σ z_{k+i}}`, as written for the diagonal-Gaussian integrand.
    #[default]
    Verbatim,
    /// The usual `Σ z_{k+i} + (k/2) log 2π` with the residual scaled by `e^{-z_{k+i}}`.
    Textbook,
}

/// Gaussian likelihood with learned diagonal variance, `l = 2k`:
/// `ι(x, z) = ½ Σ ((t(x)_i − z_i)/e^{z_{k+i}})² + √(2π) e^{Σ z_{k+i}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNll {
    k: usize,
    normalization: Normalization,
}

/// Largest `|z_{k+i}|` accepted before `e^{z}` is considered overflowing.
pub const EXP_LIMIT: f64 = 700.0;

impl GaussianNll {
    pub fn new(k: usize, normalization: Normalization) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("Gaussian likelihood needs k ≥ 1".into()));
        }
        Ok(GaussianNll { k, normalization })
    }

    fn split<'a>(&self, sample: &'a Sample, z: &'a [f64]) -> Result<(&'a [f64], &'a [f64], &'a [f64])> {
        check_len(z, 2 * self.k)?;
        let t = sample.target()?;
        check_len(t, self.k)?;
        let (mean, log_scale) = z.split_at(self.k);
        if let Some(s) = log_scale.iter().find(|s| s.abs() > EXP_LIMIT) {
            return Err(Error::numeric(
                "gaussian_nll",
                format!("log-scale output {s} overflows the exponential"),
            ));
        }
        Ok((t, mean, log_scale))
    }
}

impl Integrand for GaussianNll {
    fn output_dim(&self) -> usize {
        2 * self.k
    }

    fn value(&self, sample: &Sample, z: &[f64]) -> Result<f64> {
        let (t, mean, ls) = self.split(sample, z)?;
        let quad: f64 = t
            .iter()
            .zip(mean)
            .zip(ls)
            .map(|((t, m), s)| ((t - m) * libm::exp(-s)).powi(2))
            .sum();
        let sum_ls: f64 = ls.iter().sum();
        let norm = match self.normalization {
            Normalization::Verbatim => libm::sqrt(2.0 * PI) * libm::exp(sum_ls),
            Normalization::Textbook => sum_ls + 0.5 * self.k as f64 * libm::log(2.0 * PI),
        };
        Ok(0.5 * quad + norm)
    }

    fn gradient(&self, sample: &Sample, z: &[f64]) -> Result<Vec<f64>> {
        let (t, mean, ls) = self.split(sample, z)?;
        let mut g = vec![0.0; 2 * self.k];
        let sum_ls: f64 = ls.iter().sum();
        let dnorm = match self.normalization {
            Normalization::Verbatim => libm::sqrt(2.0 * PI) * libm::exp(sum_ls),
            Normalization::Textbook => 1.0,
        };
        for i in 0..self.k {
            let inv_var = libm::exp(-2.0 * ls[i]);
            let r = t[i] - mean[i];
            g[i] = -r * inv_var;
            g[self.k + i] = -r * r * inv_var + dnorm;
        }
        Ok(g)
    }

    fn name(&self) -> &'static str {
        "gaussian_nll"
    }
}

/// Softmax cross-entropy `ι(x, z) = log Σ e^{z_i} − z_{t(x)}` with the class
/// label `t(x) ∈ {1, …, l}` stored as the single target entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxCe {
    classes: usize,
}

impl SoftmaxCe {
    pub fn new(classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidConfig("softmax needs at least two classes".into()));
        }
        Ok(SoftmaxCe { classes })
    }

    /// Zero-based class index of a sample.
    pub fn class_of(&self, sample: &Sample) -> Result<usize> {
        let t = sample.target()?;
        let label = match t {
            [label] => *label,
            _ => return Err(Error::InvalidDataset("class target must be a single label".into())),
        };
        if label.fract() != 0.0 || label < 1.0 || label > self.classes as f64 {
            return Err(Error::InvalidDataset(format!(
                "class label {label} outside 1..={}",
                self.classes
            )));
        }
        Ok(label as usize - 1)
    }

    fn log_sum_exp(z: &[f64]) -> f64 {
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + libm::log(z.iter().map(|v| libm::exp(v - m)).sum::<f64>())
    }
}

impl Integrand for SoftmaxCe {
    fn output_dim(&self) -> usize {
        self.classes
    }

    fn value(&self, sample: &Sample, z: &[f64]) -> Result<f64> {
        check_len(z, self.classes)?;
        let c = self.class_of(sample)?;
        Ok(Self::log_sum_exp(z) - z[c])
    }

    fn gradient(&self, sample: &Sample, z: &[f64]) -> Result<Vec<f64>> {
        check_len(z, self.classes)?;
        let c = self.class_of(sample)?;
        let lse = Self::log_sum_exp(z);
        let mut g: Vec<f64> = z.iter().map(|v| libm::exp(v - lse)).collect();
        g[c] -= 1.0;
        Ok(g)
    }

    /// The softmax Jacobian has norm ≤ ½; 1 is reported as a safe bound.
    fn lg(&self) -> Option<Constant> {
        Some(Constant::analytic_upper(1.0))
    }

    fn pointwise_inf(&self, _sample: &Sample) -> Option<f64> {
        Some(0.0)
    }

    fn infimum_attained(&self) -> bool {
        false
    }

    fn name(&self) -> &'static str {
        "softmax_ce"
    }
}

/// Closed-form KL divergence of `N(m, diag(s²))` from `N(0, I)`, with the
/// encoder output laid out as `(m, log s)`:
/// `½ Σ (m_i² + s_i² − 1 − 2 log s_i)`.
pub fn gaussian_kl(encoder_out: &[f64]) -> f64 {
    let k = encoder_out.len() / 2;
    let (m, ls) = encoder_out.split_at(k);
    0.5 * m
        .iter()
        .zip(ls)
        .map(|(m, l)| m * m + libm::exp(2.0 * l) - 1.0 - 2.0 * l)
        .sum::<f64>()
}

pub fn gaussian_kl_gradient(encoder_out: &[f64]) -> Vec<f64> {
    let k = encoder_out.len() / 2;
    let (m, ls) = encoder_out.split_at(k);
    m.iter()
        .copied()
        .chain(ls.iter().map(|l| libm::exp(2.0 * l) - 1.0))
        .collect()
}

/// VAE integrand `ι((y, w), (z_E, z_D)) = ℓ(y, z_D) + β d(z_E)` with a
/// fixed-variance Gaussian reconstruction `ℓ` and closed-form Gaussian KL `d`.
/// Output layout: `z = (m, log s, z_D)` with `latent` entries each for `m`
/// and `log s`.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeIntegrand {
    reconstruction: LeastSquares,
    beta: f64,
    latent: usize,
}

impl VaeIntegrand {
    pub fn new(reconstruction: LeastSquares, beta: f64, latent: usize) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("β = {beta} must be positive")));
        }
        if latent == 0 {
            return Err(Error::InvalidConfig("latent dimension must be positive".into()));
        }
        Ok(VaeIntegrand {
            reconstruction,
            beta,
            latent,
        })
    }

    pub fn encoder_dim(&self) -> usize {
        2 * self.latent
    }

    fn split<'a>(&self, z: &'a [f64]) -> Result<(&'a [f64], &'a [f64])> {
        check_len(z, self.output_dim())?;
        if let Some(s) = z[self.latent..2 * self.latent].iter().find(|s| s.abs() > EXP_LIMIT) {
            return Err(Error::numeric(
                "vae",
                format!("log-scale {s} overflows the exponential"),
            ));
        }
        Ok(z.split_at(self.encoder_dim()))
    }
}

impl Integrand for VaeIntegrand {
    fn output_dim(&self) -> usize {
        self.encoder_dim() + self.reconstruction.output_dim()
    }

    fn value(&self, sample: &Sample, z: &[f64]) -> Result<f64> {
        let (enc, dec) = self.split(z)?;
        Ok(self.reconstruction.value(sample, dec)? + self.beta * gaussian_kl(enc))
    }

    fn gradient(&self, sample: &Sample, z: &[f64]) -> Result<Vec<f64>> {
        let (enc, dec) = self.split(z)?;
        let mut g: Vec<f64> = gaussian_kl_gradient(enc).into_iter().map(|v| self.beta * v).collect();
        g.extend(self.reconstruction.gradient(sample, dec)?);
        Ok(g)
    }

    fn pointwise_inf(&self, sample: &Sample) -> Option<f64> {
        self.reconstruction.pointwise_inf(sample)
    }

    fn pointwise_minimizer(&self, sample: &Sample) -> Option<Vec<f64>> {
        let mut z = vec![0.0; self.encoder_dim()];
        z.extend(self.reconstruction.pointwise_minimizer(sample)?);
        Some(z)
    }

    fn name(&self) -> &'static str {
        "vae"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GanKind {
    /// `ι_ρ = y − β(‖w‖ − 1)²`, `ι_γ = −y − β(‖w‖ − 1)²`.
    WganGp,
    /// `ι_ρ = log y − β‖w‖²`, `ι_γ = log(1 − y)`.
    R1,
}

/// Which way descent moves the discriminator integrand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    /// Minimize `ι`.
    Descend,
    /// Maximize `ι`, i.e. minimize `−ι`.
    #[default]
    Ascend,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Descend => 1.0,
            Direction::Ascend => -1.0,
        }
    }
}

/// Gradient-regularized discriminator integrand
/// `ι(x, z) = (dρ/dμ)(x) ι_ρ(x, z) + (dγ/dμ)(x) ι_γ(x, z)` on
/// `z = (y, w) ∈ ℝ^{1+k}`: discriminator output and its input gradient.
/// Descent works on `sign · ι` per [`Direction`].
#[derive(Debug, Clone, PartialEq)]
pub struct GanIntegrand {
    kind: GanKind,
    beta: f64,
    k: usize,
    direction: Direction,
}

impl GanIntegrand {
    pub fn new(kind: GanKind, beta: f64, k: usize, direction: Direction) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("β = {beta} must be positive")));
        }
        Ok(GanIntegrand {
            kind,
            beta,
            k,
            direction,
        })
    }

    pub fn kind(&self) -> GanKind {
        self.kind
    }

    /// The unsigned integrand `ι`.
    pub fn raw_value(&self, sample: &Sample, z: &[f64]) -> Result<f64> {
        check_len(z, 1 + self.k)?;
        let mix = sample.mixture()?;
        let y = z[0];
        let w = &z[1..];
        let wn2: f64 = w.iter().map(|v| v * v).sum();
        match self.kind {
            GanKind::WganGp => {
                let pen = self.beta * (libm::sqrt(wn2) - 1.0).powi(2);
                Ok(mix.real * (y - pen) + mix.generated * (-y - pen))
            }
            GanKind::R1 => {
                let mut v = 0.0;
                if mix.real > 0.0 {
                    if y <= 0.0 {
                        return Err(domain_error(y, "log(y) on a real sample needs y > 0"));
                    }
                    v += mix.real * (libm::log(y) - self.beta * wn2);
                }
                if mix.generated > 0.0 {
                    if y >= 1.0 {
                        return Err(domain_error(y, "log(1 − y) on a generated sample needs y < 1"));
                    }
                    v += mix.generated * libm::log(1.0 - y);
                }
                Ok(v)
            }
        }
    }

    /// Gradient of the unsigned integrand. At `w = 0` the WGAN-GP penalty is
    /// not differentiable; the zero subgradient is returned there.
    pub fn raw_gradient(&self, sample: &Sample, z: &[f64]) -> Result<Vec<f64>> {
        check_len(z, 1 + self.k)?;
        let mix = sample.mixture()?;
        let y = z[0];
        let w = &z[1..];
        let mut g = vec![0.0; 1 + self.k];
        match self.kind {
            GanKind::WganGp => {
                g[0] = mix.real - mix.generated;
                let wn = libm::sqrt(w.iter().map(|v| v * v).sum::<f64>());
                if wn > 0.0 {
                    let s = -(mix.real + mix.generated) * self.beta * 2.0 * (wn - 1.0) / wn;
                    g[1..].iter_mut().zip(w).for_each(|(gi, wi)| *gi = s * wi);
                }
            }
            GanKind::R1 => {
                if mix.real > 0.0 {
                    if y <= 0.0 {
                        return Err(domain_error(y, "log(y) on a real sample needs y > 0"));
                    }
                    g[0] += mix.real / y;
                    g[1..]
                        .iter_mut()
                        .zip(w)
                        .for_each(|(gi, wi)| *gi = -mix.real * 2.0 * self.beta * wi);
                }
                if mix.generated > 0.0 {
                    if y >= 1.0 {
                        return Err(domain_error(y, "log(1 − y) on a generated sample needs y < 1"));
                    }
                    g[0] -= mix.generated / (1.0 - y);
                }
            }
        }
        Ok(g)
    }
}

fn domain_error(y: f64, what: &str) -> Error {
    Error::Domain(format!("{what}, got y = {y}"))
}

impl Integrand for GanIntegrand {
    fn output_dim(&self) -> usize {
        1 + self.k
    }

    fn value(&self, sample: &Sample, z: &[f64]) -> Result<f64> {
        Ok(self.direction.sign() * self.raw_value(sample, z)?)
    }

    fn gradient(&self, sample: &Sample, z: &[f64]) -> Result<Vec<f64>> {
        let s = self.direction.sign();
        Ok(self.raw_gradient(sample, z)?.into_iter().map(|v| s * v).collect())
    }

    fn name(&self) -> &'static str {
        match self.kind {
            GanKind::WganGp => "wgan_gp",
            GanKind::R1 => "r1",
        }
    }
}

/// `I_ι` over an empirical measure, as an [`Objective`] on `L²(μ, ℝˡ)` in
/// function coordinates.
#[derive(Clone)]
pub struct IntegralFunctional {
    integrand: Arc<dyn Integrand>,
    data: Arc<Dataset>,
    space: WeightedSpace,
}

impl IntegralFunctional {
    pub fn new(integrand: Arc<dyn Integrand>, data: Arc<Dataset>) -> Result<Self> {
        let space = data.feature_space(integrand.output_dim())?;
        Ok(IntegralFunctional { integrand, data, space })
    }

    pub fn integrand(&self) -> &dyn Integrand {
        &*self.integrand
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    fn blocks<'a>(&'a self, f: &'a [f64]) -> Result<impl Iterator<Item = (usize, (&'a Sample, &'a [f64]))> + 'a> {
        self.space.check(f)?;
        let l = self.integrand.output_dim();
        Ok(self.data.samples().iter().zip(f.chunks(l)).enumerate())
    }
}

fn at_sample(i: usize, e: Error) -> Error {
    match e {
        Error::Numeric { location, detail } => Error::Numeric {
            location: format!("sample {i} ({location})"),
            detail,
        },
        Error::Domain(d) => Error::Domain(format!("sample {i}: {d}")),
        Error::InvalidDataset(d) => Error::InvalidDataset(format!("sample {i}: {d}")),
        other => other,
    }
}

impl Objective for IntegralFunctional {
    fn space(&self) -> &WeightedSpace {
        &self.space
    }

    fn value(&self, f: &[f64]) -> Result<f64> {
        let w = self.data.weights();
        let mut total = 0.0;
        for (i, (s, z)) in self.blocks(f)? {
            total += w[i] * self.integrand.value(s, z).map_err(|e| at_sample(i, e))?;
        }
        if !total.is_finite() {
            return Err(Error::numeric(String::from("integral functional"), "non-finite value"));
        }
        Ok(total)
    }

    fn gradient(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut g = Vec::with_capacity(f.len());
        for (i, (s, z)) in self.blocks(f)? {
            g.extend(self.integrand.gradient(s, z).map_err(|e| at_sample(i, e))?);
        }
        Ok(g)
    }

    fn infimum(&self) -> Option<f64> {
        self.data
            .samples()
            .iter()
            .zip(self.data.weights())
            .map(|(s, w)| self.integrand.pointwise_inf(s).map(|v| w * v))
            .sum()
    }

    fn lg(&self) -> Option<Constant> {
        self.integrand.lg()
    }

    fn pl(&self) -> Option<Constant> {
        self.integrand.pl()
    }

    fn unique_minimizer(&self) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(self.space.dim());
        for s in self.data.samples() {
            out.extend(self.integrand.pointwise_minimizer(s)?);
        }
        Some(out)
    }
}
