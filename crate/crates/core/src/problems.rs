//! Ready-to-run instances of `min_θ (I_ι ∘ N_μ)(θ)`: supervised learning,
//! VAE training and a gradient-penalized GAN discriminator.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::descent::{composite_gradient, ConstantsLedger};
use crate::error::{Error, Result};
use crate::integrand::{
    Dataset, Direction, GanIntegrand, GanKind, IntegralFunctional, Integrand, LeastSquares, Mixture, Sample,
    VaeIntegrand,
};
use crate::model::{Discriminator, GanModel, InducedMap, Model, VaeModel};
use crate::objective::{fd_check_gradient, Objective};
use crate::rng;
use crate::smoothmap::{fd_check, Ball, SmoothMap};

/// Declared radius when no ledger pre-estimate is available.
pub const FALLBACK_RADIUS: f64 = 1e3;
/// Declared radius as a multiple of the pre-estimated distance bound.
pub const RADIUS_MULTIPLE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Supervised,
    Vae,
    GanDiscriminator,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Supervised => "supervised",
            Family::Vae => "vae",
            Family::GanDiscriminator => "gan_discriminator",
        }
    }
}

#[derive(Clone)]
pub struct PrototypeProblem {
    pub name: String,
    pub family: Family,
    pub map: InducedMap,
    pub objective: IntegralFunctional,
    pub theta0: Vec<f64>,
    /// Region on which certificates are claimed; set by the caller once a
    /// ledger pre-estimate exists.
    pub declared_ball: Option<Ball>,
    pub warnings: Vec<String>,
}

/// Worst finite-difference errors over the probed parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    /// Jacobian of `N_μ`.
    pub map: f64,
    /// Gradient of `I_ι` at `N_μ(θ)`.
    pub objective: f64,
    /// Gradient of the composition.
    pub composite: f64,
    pub probes: usize,
}

impl FdReport {
    pub fn worst(&self) -> f64 {
        self.map.max(self.objective).max(self.composite)
    }
}

impl PrototypeProblem {
    fn assemble(
        name: &str,
        family: Family,
        model: Arc<dyn Model>,
        data: Arc<Dataset>,
        integrand: Arc<dyn Integrand>,
        theta0: Vec<f64>,
    ) -> Result<Self> {
        if model.output_dim() != integrand.output_dim() {
            return Err(Error::InvalidConfig(format!(
                "model output dimension {} differs from integrand dimension {}",
                model.output_dim(),
                integrand.output_dim()
            )));
        }
        let map = InducedMap::new(model, data.clone())?;
        let objective = IntegralFunctional::new(integrand, data)?;
        map.domain().check(&theta0)?;
        Ok(PrototypeProblem {
            name: name.into(),
            family,
            map,
            objective,
            theta0,
            declared_ball: None,
            warnings: Vec::new(),
        })
    }

    pub fn loss(&self, theta: &[f64]) -> Result<f64> {
        self.objective.value(&self.map.value(theta)?)
    }

    /// Central finite-difference checks of `N_μ`, `∇I_ι` and `∇(I_ι∘N_μ)` at
    /// `θ₀` and at `perturbations` random points at distance `scale` from it.
    pub fn fd_report(&self, perturbations: usize, scale: f64, seed: u64) -> Result<FdReport> {
        let mut thetas = alloc::vec![self.theta0.clone()];
        let ball = Ball::new(self.theta0.clone(), scale)?;
        let mut r = rng::seeded(seed);
        thetas.extend((0..perturbations).map(|_| ball.sample(self.map.domain(), &mut r)));
        let mut rep = FdReport {
            map: 0.0,
            objective: 0.0,
            composite: 0.0,
            probes: thetas.len(),
        };
        let h = 1e-6;
        for t in &thetas {
            rep.map = rep.map.max(fd_check(&self.map, t, h)?);
            let f = self.map.value(t)?;
            rep.objective = rep.objective.max(fd_check_gradient(&self.objective, &f, h)?);
            rep.composite = rep.composite.max(self.composite_fd(t, h)?);
        }
        Ok(rep)
    }

    fn composite_fd(&self, theta: &[f64], h: f64) -> Result<f64> {
        let (_, g) = composite_gradient(&self.map, &self.objective, theta)?;
        let mut p = theta.to_vec();
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..theta.len() {
            p[k] = theta[k] + h;
            let a = self.loss(&p)?;
            p[k] = theta[k] - h;
            let b = self.loss(&p)?;
            p[k] = theta[k];
            let fd = (a - b) / (2.0 * h);
            num += (fd - g[k]) * (fd - g[k]);
            den += g[k] * g[k];
        }
        Ok(libm::sqrt(num) / libm::sqrt(den).max(1e-4))
    }
}

/// Supervised learning with `ι(x, z) = ℓ(t(x), z)`. Every input must carry
/// exactly one target; a repeated input with a different target is rejected.
pub fn supervised(
    name: &str,
    model: Arc<dyn Model>,
    data: Arc<Dataset>,
    integrand: Arc<dyn Integrand>,
    theta0: Vec<f64>,
) -> Result<PrototypeProblem> {
    let s = data.samples();
    for (i, a) in s.iter().enumerate() {
        if a.target.is_none() {
            return Err(Error::InvalidDataset(format!("sample {i} has no target")));
        }
        if let Some(j) = s[..i].iter().position(|b| b.input == a.input && b.target != a.target) {
            return Err(Error::InvalidDataset(format!(
                "input {:?} (samples {j} and {i}) has conflicting targets",
                a.input
            )));
        }
    }
    PrototypeProblem::assemble(name, Family::Supervised, model, data, integrand, theta0)
}

/// VAE training over the product measure `υ ⊗ ω` of data points `y_j` and
/// noise draws `w_k`, with uniform masses on each factor.
#[allow(clippy::too_many_arguments)]
pub fn vae<E, D>(
    name: &str,
    model: VaeModel<E, D>,
    data_y: &[Vec<f64>],
    noise: &[Vec<f64>],
    reconstruction: LeastSquares,
    beta: f64,
    theta0: Option<Vec<f64>>,
    seed: u64,
) -> Result<PrototypeProblem>
where
    E: Model + 'static,
    D: Model + 'static,
{
    if data_y.is_empty() || noise.is_empty() {
        return Err(Error::InvalidDataset(
            "VAE needs at least one data point and one noise draw".into(),
        ));
    }
    let mut samples = Vec::with_capacity(data_y.len() * noise.len());
    for y in data_y {
        if y.len() != model.data_dim() {
            return Err(Error::InvalidDataset(format!(
                "data point of dimension {} for an encoder expecting {}",
                y.len(),
                model.data_dim()
            )));
        }
        for w in noise {
            if w.len() != model.latent() {
                return Err(Error::InvalidDataset(format!(
                    "noise draw of dimension {} for latent dimension {}",
                    w.len(),
                    model.latent()
                )));
            }
            let mut input = y.clone();
            input.extend_from_slice(w);
            samples.push(Sample::with_target(input, y.clone()));
        }
    }
    let data = Arc::new(Dataset::uniform(samples)?);
    let integrand = Arc::new(VaeIntegrand::new(reconstruction, beta, model.latent())?);
    let theta0 = theta0.unwrap_or_else(|| model.init(seed));
    PrototypeProblem::assemble(name, Family::Vae, Arc::new(model), data, integrand, theta0)
}

/// Discriminator problem over `μ = ½(ρ + γ)` for the empirical real and
/// generated samples, with `N(x, θ) = (D(x, θ), ∇_x D(x, θ))`.
#[allow(clippy::too_many_arguments)]
pub fn gan_discriminator<T>(
    name: &str,
    disc: T,
    real: &[Vec<f64>],
    generated: &[Vec<f64>],
    kind: GanKind,
    beta: f64,
    direction: Direction,
    theta0: Option<Vec<f64>>,
    seed: u64,
) -> Result<PrototypeProblem>
where
    T: Discriminator + 'static,
{
    if real.is_empty() || generated.is_empty() {
        return Err(Error::InvalidDataset(
            "need at least one real and one generated sample".into(),
        ));
    }
    let (nr, ng) = (real.len() as f64, generated.len() as f64);
    let mut samples = Vec::new();
    let mut weights = Vec::new();
    for (pts, mix, w) in [
        (real, Mixture::REAL, 0.5 / nr),
        (generated, Mixture::GENERATED, 0.5 / ng),
    ] {
        for x in pts {
            samples.push(Sample {
                input: x.clone(),
                target: None,
                mixture: Some(mix),
            });
            weights.push(w);
        }
    }
    let data = Arc::new(Dataset::new(samples, weights)?);
    let k = disc.input_dim();
    let bounded = disc.bounded_unit();
    let model = GanModel { disc };
    let theta0 = theta0.unwrap_or_else(|| model.init(seed));
    let integrand = Arc::new(GanIntegrand::new(kind, beta, k, direction)?);
    let mut problem =
        PrototypeProblem::assemble(name, Family::GanDiscriminator, Arc::new(model), data, integrand, theta0)?;
    if kind == GanKind::R1 {
        if !bounded {
            problem
                .warnings
                .push("r1 integrand with a discriminator whose output is not confined to (0, 1)".into());
        }
        let out = problem.map.value(&problem.theta0)?;
        let l = 1 + k;
        if let Some(i) = out.chunks(l).position(|z| !(z[0] > 0.0 && z[0] < 1.0)) {
            problem.warnings.push(format!(
                "discriminator output {} at sample {i} lies outside (0, 1)",
                out[i * l]
            ));
        }
    }
    Ok(problem)
}

/// Declared radius: `10 · αK/(1 − √q)` from a pre-estimated ledger, else `10³`.
pub fn default_radius(pre: Option<&ConstantsLedger>) -> f64 {
    match pre.and_then(ConstantsLedger::distance_bound) {
        Some(d) if d.is_finite() && d > 0.0 => RADIUS_MULTIPLE * d,
        _ => FALLBACK_RADIUS,
    }
}
