//! Config → problem → certificates → ledger → descent.

use std::sync::Arc;
use std::time::Instant;

use plgd_core::descent::{
    build_ledger, run, uncertified_ledger, ConstantsLedger, Outcome, RunOptions, RunOutput, StepSize,
};
use plgd_core::integrand::{
    Direction, GanKind, GaussianNll, IntegralFunctional, Integrand, LeastSquares, Normalization, SoftmaxCe,
};
use plgd_core::model::{
    ntk_gram, Discriminator, Features, InducedMap, LinearDiscriminator, LinearModel, MisreportedJacobian, Model,
    RandomFeatures, ShallowDiscriminator, ShallowNet, VaeModel,
};
use plgd_core::objective::Objective;
use plgd_core::problems::{self, default_radius, FdReport, PrototypeProblem};
use plgd_core::rng;
use plgd_core::smoothmap::{estimate_certificate, Ball, Constant, MapCertificate, SmoothMap};
use plgd_core::space::WeightedSpace;

use crate::config::{
    Alpha, CertificateMode, DatasetConfig, DirectionName, DiscriminatorKind, ExperimentConfig, FamilyName, FeatureKind,
    IntegrandConfig, IntegrandKind, ModelConfig, ModelKind, NormalizationName, Overrides, Theta0, Theta0Keyword,
};
use crate::data::{self, DatasetFile, ParamSnapshot};
use crate::error::CliError;

/// Worst relative finite-difference error accepted before descent.
pub const FD_TOL: f64 = 1e-5;
pub const FD_PERTURBATIONS: usize = 10;
pub const FD_SCALE: f64 = 0.1;
/// The NTK Gram is recomputed at every iterate that is a multiple of this.
pub const NTK_EVERY: usize = 10;
/// Gram eigenvalues below this fraction of `max(λ_max, 1)` count as zero.
pub const SINGULAR_FLOOR: f64 = 1e-10;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAILED: i32 = 2;

fn load_dataset(cfg: &DatasetConfig, seed: u64, sides: bool) -> Result<DatasetFile, CliError> {
    let file = match (&cfg.path, &cfg.synthetic, &cfg.inline) {
        (Some(p), _, _) => DatasetFile::load(p)?,
        (_, Some(s), _) => data::synthetic(s, seed, sides),
        (_, _, Some(d)) => d.clone(),
        _ => return Err(CliError::Config("problem.dataset has no source".into())),
    };
    file.validate()?;
    Ok(file)
}

fn initial_params(theta0: &Theta0, p: usize, init: impl FnOnce() -> Vec<f64>) -> Result<Vec<f64>, CliError> {
    let theta = match theta0 {
        Theta0::Keyword(Theta0Keyword::Init) => init(),
        Theta0::Keyword(Theta0Keyword::Zeros) => vec![0.0; p],
        Theta0::Values(v) => v.clone(),
        Theta0::File { path } => ParamSnapshot::load(path)?.data,
    };
    if theta.len() != p {
        return Err(CliError::Config(format!(
            "problem.theta0 has {} entries; the model has {p} parameters",
            theta.len()
        )));
    }
    Ok(theta)
}

fn target_dim(file: &DatasetFile) -> Result<usize, CliError> {
    let targets = file
        .targets
        .as_ref()
        .ok_or_else(|| CliError::Data("supervised datasets need targets".into()))?;
    let l = targets[0].len();
    if let Some(i) = targets.iter().position(|t| t.len() != l) {
        return Err(CliError::Data(format!(
            "target {i} has length {} instead of {l}",
            targets[i].len()
        )));
    }
    Ok(l)
}

fn supervised_integrand(cfg: &IntegrandConfig, file: &DatasetFile) -> Result<Arc<dyn Integrand>, CliError> {
    let k = target_dim(file)?;
    Ok(match cfg.kind {
        IntegrandKind::LeastSquares => {
            let sigma = cfg.sigma.clone().unwrap_or_else(|| vec![1.0; k]);
            if sigma.len() != k {
                return Err(CliError::Config(format!(
                    "problem.integrand.sigma has {} entries for targets of length {k}",
                    sigma.len()
                )));
            }
            Arc::new(LeastSquares::new(sigma)?)
        }
        IntegrandKind::GaussianNll => {
            let norm = match cfg.normalization {
                NormalizationName::Verbatim => Normalization::Verbatim,
                NormalizationName::Textbook => Normalization::Textbook,
            };
            Arc::new(GaussianNll::new(k, norm)?)
        }
        IntegrandKind::SoftmaxCe => {
            let classes = match cfg.classes {
                Some(c) => c,
                None => file.targets.iter().flatten().flatten().fold(0.0f64, |m, &v| m.max(v)) as usize,
            };
            Arc::new(SoftmaxCe::new(classes)?)
        }
        IntegrandKind::WganGp | IntegrandKind::R1 => {
            return Err(CliError::Config("GAN integrands belong to family = \"gan\"".into()))
        }
    })
}

fn supervised_model(cfg: &ModelConfig, n: usize, l: usize, seed: u64) -> Result<Arc<dyn Model>, CliError> {
    let width = cfg.width.unwrap_or(0);
    let base: Arc<dyn Model> = match cfg.kind {
        ModelKind::Linear => {
            let features = match cfg.features {
                FeatureKind::Identity => Features::Identity,
                FeatureKind::Affine => Features::Affine,
            };
            Arc::new(LinearModel::new(n, l, features)?)
        }
        ModelKind::RandomFeatures => Arc::new(RandomFeatures::new(n, width, l, cfg.feature_seed.unwrap_or(seed))?),
        ModelKind::ShallowNet => Arc::new(ShallowNet::new(n, width, l)?),
    };
    Ok(match cfg.jacobian_factor {
        Some(factor) => Arc::new(MisreportedJacobian { inner: base, factor }),
        None => base,
    })
}

fn gan_problem<T: Discriminator + 'static>(
    cfg: &ExperimentConfig,
    disc: T,
    real: &[Vec<f64>],
    generated: &[Vec<f64>],
) -> Result<PrototypeProblem, CliError> {
    let p = &cfg.problem;
    let integrand = p
        .integrand
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [problem.integrand]".into()))?;
    let kind = match integrand.kind {
        IntegrandKind::WganGp => GanKind::WganGp,
        IntegrandKind::R1 => GanKind::R1,
        _ => {
            return Err(CliError::Config(
                "gan problems need integrand kind wgan_gp or r1".into(),
            ))
        }
    };
    let direction = match integrand.direction {
        DirectionName::Descend => Direction::Descend,
        DirectionName::Ascend => Direction::Ascend,
    };
    let theta0 = match &p.theta0 {
        Theta0::Keyword(Theta0Keyword::Init) => None,
        other => Some(initial_params(other, disc.param_dim(), || disc.init(p.seed))?),
    };
    let name = p.name.clone().unwrap_or_else(|| "gan".into());
    Ok(problems::gan_discriminator(
        &name,
        disc,
        real,
        generated,
        kind,
        integrand.beta,
        direction,
        theta0,
        p.seed,
    )?)
}

/// Assembles the problem a config describes.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<PrototypeProblem, CliError> {
    let p = &cfg.problem;
    match p.family {
        FamilyName::Supervised => {
            let file = load_dataset(&p.dataset, p.seed, false)?;
            let (Some(model_cfg), Some(int_cfg)) = (&p.model, &p.integrand) else {
                return Err(CliError::Config(
                    "supervised problems need [problem.model] and [problem.integrand]".into(),
                ));
            };
            let integrand = supervised_integrand(int_cfg, &file)?;
            let model = supervised_model(model_cfg, file.input_dim(), integrand.output_dim(), p.seed)?;
            let theta0 = initial_params(&p.theta0, model.param_dim(), || model.init(p.seed))?;
            let data = Arc::new(file.to_dataset()?);
            let name = p.name.clone().unwrap_or_else(|| "supervised".into());
            Ok(problems::supervised(&name, model, data, integrand, theta0)?)
        }
        FamilyName::Vae => {
            let v = p
                .vae
                .as_ref()
                .ok_or_else(|| CliError::Config("missing [problem.vae]".into()))?;
            let file = load_dataset(&p.dataset, p.seed, false)?;
            if file.weights.is_some() {
                return Err(CliError::Data(
                    "vae datasets are uniformly weighted; drop weights".into(),
                ));
            }
            let d = file.input_dim();
            let enc = ShallowNet::new(d, v.encoder_width, 2 * v.latent)?;
            let dec = ShallowNet::new(v.latent, v.decoder_width, d)?;
            let model = VaeModel::new(enc, dec, v.latent)?;
            let mut r = rng::seeded(p.seed.wrapping_add(1));
            let noise: Vec<Vec<f64>> = (0..v.noise_draws)
                .map(|_| rng::gaussian_vec(&mut r, v.latent))
                .collect();
            let sigma = v.sigma.clone().unwrap_or_else(|| vec![1.0; d]);
            if sigma.len() != d {
                return Err(CliError::Config(format!(
                    "problem.vae.sigma has {} entries for data of dimension {d}",
                    sigma.len()
                )));
            }
            let theta0 = match &p.theta0 {
                Theta0::Keyword(Theta0Keyword::Init) => None,
                other => Some(initial_params(other, model.param_dim(), || model.init(p.seed))?),
            };
            let name = p.name.clone().unwrap_or_else(|| "vae".into());
            Ok(problems::vae(
                &name,
                model,
                &file.inputs,
                &noise,
                LeastSquares::new(sigma)?,
                v.beta,
                theta0,
                p.seed,
            )?)
        }
        FamilyName::Gan => {
            let g = p
                .gan
                .as_ref()
                .ok_or_else(|| CliError::Config("missing [problem.gan]".into()))?;
            let file = load_dataset(&p.dataset, p.seed, true)?;
            let (real, generated) = file.split_sides()?;
            let k = file.input_dim();
            match g.discriminator {
                DiscriminatorKind::Linear => gan_problem(cfg, LinearDiscriminator::new(k)?, &real, &generated),
                DiscriminatorKind::Shallow => gan_problem(
                    cfg,
                    ShallowDiscriminator::new(k, g.width.unwrap_or(0), g.sigmoid)?,
                    &real,
                    &generated,
                ),
            }
        }
    }
}

/// The problem's integral functional with the user's objective overrides.
pub struct Adjusted<'a> {
    pub inner: &'a IntegralFunctional,
    pub infimum: Option<f64>,
    pub lg: Option<Constant>,
    pub pl: Option<Constant>,
}

impl<'a> Adjusted<'a> {
    pub fn new(inner: &'a IntegralFunctional, o: &Overrides) -> Self {
        Adjusted {
            inner,
            infimum: o.f_star,
            lg: o.l_obj.map(Constant::user),
            pl: o.lambda_obj.map(Constant::user),
        }
    }
}

impl Objective for Adjusted<'_> {
    fn space(&self) -> &WeightedSpace {
        self.inner.space()
    }
    fn value(&self, h: &[f64]) -> plgd_core::Result<f64> {
        self.inner.value(h)
    }
    fn gradient(&self, h: &[f64]) -> plgd_core::Result<Vec<f64>> {
        self.inner.gradient(h)
    }
    fn infimum(&self) -> Option<f64> {
        self.infimum.or_else(|| self.inner.infimum())
    }
    fn lg(&self) -> Option<Constant> {
        self.lg.or_else(|| self.inner.lg())
    }
    fn pl(&self) -> Option<Constant> {
        self.pl.or_else(|| self.inner.pl())
    }
    fn unique_minimizer(&self) -> Option<Vec<f64>> {
        self.inner.unique_minimizer()
    }
}

fn apply_map_overrides(cert: MapCertificate, o: &Overrides) -> Result<MapCertificate, CliError> {
    Ok(MapCertificate::new(
        o.k_map.map(Constant::user).unwrap_or(cert.bj),
        o.l_map.map(Constant::user).unwrap_or(cert.lj),
        o.lambda_map.map(Constant::user).or(cert.uc),
    )?)
}

/// Closed-form certificate of a map that is affine in its parameters: the
/// Jacobian is constant, so `K_F² = λ_max` and `λ_F = λ_min` of the Gram
/// operator hold globally and `L_F = 0`.
pub fn gram_certificate(map: &InducedMap, theta: &[f64]) -> Result<MapCertificate, CliError> {
    let g = ntk_gram(map, theta)?;
    let uc = (g.lambda_min > SINGULAR_FLOOR * g.lambda_max.max(1.0)).then(|| Constant::analytic(g.lambda_min));
    Ok(MapCertificate::new(
        Constant::analytic(g.lambda_max.max(0.0).sqrt()),
        Constant::analytic(0.0),
        uc,
    )?)
}

/// Constants and the region they were established on.
#[derive(Debug, Clone)]
pub struct Certified {
    pub ledger: ConstantsLedger,
    /// `None` for global (closed-form) certificates.
    pub declared_ball: Option<Ball>,
    /// False when the objective lacks LG or `f_*` and descent runs on a
    /// fixed step without guarantees.
    pub certified: bool,
    pub notes: Vec<String>,
}

fn step_of(alpha: Alpha) -> StepSize {
    match alpha {
        Alpha::Fixed(a) => StepSize::Fixed(a),
        Alpha::Keyword(_) => StepSize::Auto,
    }
}

/// Estimates or computes the map certificate and builds the ledger.
///
/// Sampled mode pre-estimates on the unit ball around `θ₀` to size the
/// declared ball, then re-estimates on that ball.
pub fn certify(problem: &PrototypeProblem, cfg: &ExperimentConfig) -> Result<Certified, CliError> {
    let o = &cfg.certificates.overrides;
    let obj = Adjusted::new(&problem.objective, o);
    let map = &problem.map;
    let theta0 = &problem.theta0;
    let step = step_of(cfg.descent.alpha);
    let mut notes = Vec::new();

    if obj.lg().is_none() || obj.infimum().is_none() {
        let Alpha::Fixed(alpha) = cfg.descent.alpha else {
            return Err(CliError::Config(format!(
                "the {} integrand has no gradient-Lipschitz constant or known infimum; set descent.alpha to a number",
                problem.objective.integrand().name()
            )));
        };
        notes.push("objective lacks LG or f*; descent runs without guarantees".into());
        return Ok(Certified {
            ledger: uncertified_ledger(map, &obj, theta0, alpha)?,
            declared_ball: problem.declared_ball.clone(),
            certified: false,
            notes,
        });
    }

    let n = cfg.certificates.n_samples;
    let seed = cfg.certificate_seed();
    let (cert, ball) = match cfg.certificates.mode {
        CertificateMode::Analytic => {
            if map.affine_part().is_some() {
                (apply_map_overrides(gram_certificate(map, theta0)?, o)?, None)
            } else if o.k_map.is_some() && o.l_map.is_some() {
                let cert = MapCertificate::new(
                    Constant::user(o.k_map.unwrap_or_default()),
                    Constant::user(o.l_map.unwrap_or_default()),
                    o.lambda_map.map(Constant::user),
                )?;
                (cert, None)
            } else {
                return Err(CliError::Config(
                    "analytic certificates need a model linear in its parameters, or k_map and l_map overrides".into(),
                ));
            }
        }
        CertificateMode::Sampled => {
            let unit = Ball::new(theta0.clone(), 1.0)?;
            let pre = apply_map_overrides(estimate_certificate(map, &unit, n, seed)?, o)?;
            let pre_ledger = build_ledger(map, &obj, theta0, &pre, step).ok();
            if pre_ledger.as_ref().and_then(ConstantsLedger::distance_bound).is_none() {
                notes.push("pre-estimate gave no distance bound; declared ball uses the fallback radius".into());
            }
            let radius = default_radius(pre_ledger.as_ref());
            let ball = Ball::new(theta0.clone(), radius)?;
            let cert = apply_map_overrides(estimate_certificate(map, &ball, n, seed)?, o)?;
            (cert, Some(ball))
        }
    };
    if cert.uc.is_none() {
        notes.push("map is not uniformly conditioned on the region; q-dependent bounds are hypothesis-unmet".into());
    }
    let ledger = build_ledger(map, &obj, theta0, &cert, step)?;
    Ok(Certified {
        ledger,
        declared_ball: ball.or_else(|| problem.declared_ball.clone()),
        certified: true,
        notes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NtkSummary {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub asymmetry: f64,
}

pub fn ntk_summary(map: &InducedMap, theta: &[f64]) -> Result<NtkSummary, CliError> {
    let g = ntk_gram(map, theta)?;
    Ok(NtkSummary {
        lambda_min: g.lambda_min,
        lambda_max: g.lambda_max,
        asymmetry: g.asymmetry,
    })
}

/// Wall-clock seconds per stage, kept out of `report.json`.
#[derive(Debug, Clone, Default)]
pub struct Timings(pub Vec<(&'static str, f64)>);

impl Timings {
    fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.0.push((stage, t.elapsed().as_secs_f64()));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Certificates and ledger only.
    Check,
    Run,
}

/// Everything a run produced, before serialization.
pub struct Record {
    pub config: ExperimentConfig,
    pub mode: Mode,
    pub problem: PrototypeProblem,
    pub fd: FdReport,
    pub certified: Option<Certified>,
    pub output: Option<RunOutput>,
    pub ntk_initial: NtkSummary,
    pub ntk_final: Option<NtkSummary>,
    /// `(iteration, λ_min)` at every `NTK_EVERY`-th iterate and the last.
    pub ntk_path: Vec<(usize, f64)>,
    pub timings: Timings,
}

impl Record {
    pub fn fd_passed(&self) -> bool {
        self.fd.worst() <= FD_TOL
    }

    pub fn outcome(&self) -> Outcome {
        self.output
            .as_ref()
            .map_or(Outcome::NotEvaluated, |o| o.verdicts.outcome())
    }

    pub fn exit_code(&self) -> i32 {
        if !self.fd_passed() || self.outcome() == Outcome::Violation {
            EXIT_FAILED
        } else {
            EXIT_OK
        }
    }

    pub fn ledger(&self) -> Option<&ConstantsLedger> {
        self.certified.as_ref().map(|c| &c.ledger)
    }
}

/// Runs the pipeline in memory. A finite-difference failure stops before
/// certificates so the report carries the diagnostic.
pub fn execute(config: ExperimentConfig, mode: Mode) -> Result<Record, CliError> {
    let mut timings = Timings::default();
    let problem = timings.time("build", || build_problem(&config))?;
    let seed = config.certificate_seed();
    let fd = timings.time("finite_differences", || {
        problem.fd_report(FD_PERTURBATIONS, FD_SCALE, seed)
    })?;
    let ntk_initial = ntk_summary(&problem.map, &problem.theta0)?;
    let mut record = Record {
        config,
        mode,
        problem,
        fd,
        certified: None,
        output: None,
        ntk_initial,
        ntk_final: None,
        ntk_path: Vec::new(),
        timings,
    };
    if !record.fd_passed() {
        return Ok(record);
    }
    let certified = record
        .timings
        .time("certificates", || certify(&record.problem, &record.config))?;
    if mode == Mode::Run {
        let opts = RunOptions {
            max_iter: record.config.descent.max_iter,
            stop_gap: match (record.config.descent.stop_gap, record.config.descent.stop_ratio) {
                (Some(g), _) => Some(g),
                (None, Some(r)) => certified.ledger.initial_gap.map(|g0| r * g0),
                (None, None) => None,
            },
            declared_ball: certified.declared_ball.clone(),
        };
        let p = &record.problem;
        let obj = Adjusted::new(&p.objective, &record.config.certificates.overrides);
        let out = record
            .timings
            .time("descent", || run(&p.map, &obj, &p.theta0, &certified.ledger, &opts))?;
        let t = Instant::now();
        let iterates = &out.trace.iterates;
        let last = iterates.len() - 1;
        for (i, theta) in iterates.iter().enumerate() {
            if i % NTK_EVERY == 0 || i == last {
                record.ntk_path.push((i, ntk_summary(&p.map, theta)?.lambda_min));
            }
        }
        record.ntk_final = Some(ntk_summary(&p.map, out.trace.last())?);
        record.timings.0.push(("ntk", t.elapsed().as_secs_f64()));
        record.output = Some(out);
    }
    record.certified = Some(certified);
    Ok(record)
}
