//! TOML experiment configuration. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub certificates: CertificateConfig,
    #[serde(default)]
    pub descent: DescentConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Supervised,
    Vae,
    Gan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub family: FamilyName,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub theta0: Theta0,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub integrand: Option<IntegrandConfig>,
    #[serde(default)]
    pub vae: Option<VaeConfig>,
    #[serde(default)]
    pub gan: Option<GanConfig>,
}

/// Initial parameters: `"init"` (seeded model initialization), `"zeros"`,
/// an explicit array, or `{ path = "theta.json" }` holding a parameter snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Theta0 {
    Keyword(Theta0Keyword),
    Values(Vec<f64>),
    File { path: PathBuf },
}

impl Default for Theta0 {
    fn default() -> Self {
        Theta0::Keyword(Theta0Keyword::Init)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theta0Keyword {
    Init,
    Zeros,
}

/// Exactly one of `path`, `synthetic` or `inline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub inline: Option<crate::data::DatasetFile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Standard normal inputs.
    Gaussian,
    /// Inputs `e_1, …, e_n`; needs `points ≤ input_dim`.
    Orthonormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub kind: SyntheticKind,
    pub points: usize,
    pub input_dim: usize,
    /// Regression target dimension; ignored when `classes` is set.
    #[serde(default = "one")]
    pub output_dim: usize,
    /// Draw labels in `1..=classes` instead of Gaussian targets.
    #[serde(default)]
    pub classes: Option<usize>,
    /// Defaults to the problem seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    RandomFeatures,
    ShallowNet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    #[default]
    Identity,
    Affine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default)]
    pub width: Option<usize>,
    #[serde(default)]
    pub features: FeatureKind,
    /// Seed of the frozen random-feature layer; defaults to the problem seed.
    #[serde(default)]
    pub feature_seed: Option<u64>,
    /// Scales the reported Jacobian without touching the values. Only useful
    /// for exercising the finite-difference gate.
    #[serde(default)]
    pub jacobian_factor: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrandKind {
    LeastSquares,
    GaussianNll,
    SoftmaxCe,
    WganGp,
    R1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationName {
    #[default]
    Verbatim,
    Textbook,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DirectionName {
    Descend,
    #[default]
    Ascend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrandConfig {
    pub kind: IntegrandKind,
    /// Per-coordinate scales of least squares; default all ones.
    #[serde(default)]
    pub sigma: Option<Vec<f64>>,
    #[serde(default)]
    pub normalization: NormalizationName,
    /// Gradient-penalty weight of the GAN integrands.
    #[serde(default = "one_f")]
    pub beta: f64,
    #[serde(default)]
    pub direction: DirectionName,
    /// Softmax class count; defaults to the largest label in the data.
    #[serde(default)]
    pub classes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeConfig {
    pub latent: usize,
    pub encoder_width: usize,
    pub decoder_width: usize,
    #[serde(default = "two")]
    pub noise_draws: usize,
    #[serde(default = "one_f")]
    pub beta: f64,
    #[serde(default)]
    pub sigma: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorKind {
    Linear,
    Shallow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanConfig {
    pub discriminator: DiscriminatorKind,
    #[serde(default)]
    pub width: Option<usize>,
    #[serde(default)]
    pub sigmoid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CertificateMode {
    /// Closed-form constants: the integrand's own, and for models linear in
    /// their parameters the extreme eigenvalues of the Gram operator.
    Analytic,
    #[default]
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConfig {
    #[serde(default)]
    pub mode: CertificateMode,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    /// Defaults to the problem seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub overrides: Overrides,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        CertificateConfig {
            mode: CertificateMode::default(),
            n_samples: default_samples(),
            seed: None,
            overrides: Overrides::default(),
        }
    }
}

/// User-supplied constants; each replaces the computed one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default)]
    pub k_map: Option<f64>,
    #[serde(default)]
    pub l_map: Option<f64>,
    #[serde(default)]
    pub lambda_map: Option<f64>,
    #[serde(default)]
    pub l_obj: Option<f64>,
    #[serde(default)]
    pub lambda_obj: Option<f64>,
    #[serde(default)]
    pub f_star: Option<f64>,
}

impl Overrides {
    pub fn any_map(&self) -> bool {
        self.k_map.is_some() || self.l_map.is_some() || self.lambda_map.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Alpha {
    Fixed(f64),
    Keyword(AlphaKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaKeyword {
    Auto,
}

impl Default for Alpha {
    fn default() -> Self {
        Alpha::Keyword(AlphaKeyword::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescentConfig {
    #[serde(default)]
    pub alpha: Alpha,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Absolute stopping gap. At most one of `stop_gap`, `stop_ratio`.
    #[serde(default)]
    pub stop_gap: Option<f64>,
    /// Stopping gap relative to the initial gap.
    #[serde(default)]
    pub stop_ratio: Option<f64>,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            alpha: Alpha::default(),
            max_iter: default_max_iter(),
            stop_gap: None,
            stop_ratio: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Trace,
    Bounds,
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

fn one() -> usize {
    1
}
fn two() -> usize {
    2
}
fn one_f() -> f64 {
    1.0
}
fn default_samples() -> usize {
    200
}
fn default_max_iter() -> usize {
    10_000
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_formats() -> Vec<Format> {
    vec![Format::Trace, Format::Bounds, Format::Report]
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config; relative paths inside it are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.check_files()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = &mut self.problem.dataset.path {
            fix(p);
        }
        if let Theta0::File { path } = &mut self.problem.theta0 {
            fix(path);
        }
        fix(&mut self.output.dir);
    }

    fn check_files(&self) -> Result<(), CliError> {
        let mut files: Vec<&Path> = Vec::new();
        if let Some(p) = &self.problem.dataset.path {
            files.push(p);
        }
        if let Theta0::File { path } = &self.problem.theta0 {
            files.push(path);
        }
        match files.into_iter().find(|p| !p.is_file()) {
            Some(p) => Err(CliError::Config(format!(
                "referenced file {} does not exist",
                p.display()
            ))),
            None => Ok(()),
        }
    }

    /// Range and consistency checks that serde cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let p = &self.problem;
        let d = &p.dataset;
        let sources = d.path.is_some() as u8 + d.synthetic.is_some() as u8 + d.inline.is_some() as u8;
        if sources != 1 {
            return bad("problem.dataset needs exactly one of path, synthetic, inline".into());
        }
        if let Some(s) = &d.synthetic {
            if s.points == 0 || s.input_dim == 0 || s.output_dim == 0 {
                return bad("problem.dataset.synthetic: points, input_dim and output_dim must be positive".into());
            }
            if s.kind == SyntheticKind::Orthonormal && s.points > s.input_dim {
                return bad(format!(
                    "problem.dataset.synthetic: {} orthonormal points do not fit in dimension {}",
                    s.points, s.input_dim
                ));
            }
            if s.classes.is_some_and(|c| c < 2) {
                return bad("problem.dataset.synthetic.classes must be at least 2".into());
            }
        }
        match p.family {
            FamilyName::Supervised => {
                let Some(m) = &p.model else {
                    return bad("supervised problems need [problem.model]".into());
                };
                if m.kind != ModelKind::Linear && m.width.is_none_or(|w| w == 0) {
                    return bad("problem.model.width must be a positive integer for this model kind".into());
                }
                if m.jacobian_factor.is_some_and(|f| !f.is_finite()) {
                    return bad("problem.model.jacobian_factor must be finite".into());
                }
                let Some(i) = &p.integrand else {
                    return bad("supervised problems need [problem.integrand]".into());
                };
                if matches!(i.kind, IntegrandKind::WganGp | IntegrandKind::R1) {
                    return bad("GAN integrands belong to family = \"gan\"".into());
                }
                if let Some(s) = &i.sigma {
                    if s.is_empty() || s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                        return bad("problem.integrand.sigma entries must be positive".into());
                    }
                }
            }
            FamilyName::Vae => {
                let Some(v) = &p.vae else {
                    return bad("vae problems need [problem.vae]".into());
                };
                if v.latent == 0 || v.encoder_width == 0 || v.decoder_width == 0 || v.noise_draws == 0 {
                    return bad("problem.vae: latent, widths and noise_draws must be positive".into());
                }
                if !(v.beta > 0.0 && v.beta.is_finite()) {
                    return bad("problem.vae.beta must be positive".into());
                }
            }
            FamilyName::Gan => {
                let Some(g) = &p.gan else {
                    return bad("gan problems need [problem.gan]".into());
                };
                if g.discriminator == DiscriminatorKind::Shallow && g.width.is_none_or(|w| w == 0) {
                    return bad("problem.gan.width must be positive for a shallow discriminator".into());
                }
                let Some(i) = &p.integrand else {
                    return bad("gan problems need [problem.integrand] with kind wgan_gp or r1".into());
                };
                if !matches!(i.kind, IntegrandKind::WganGp | IntegrandKind::R1) {
                    return bad("gan problems need integrand kind wgan_gp or r1".into());
                }
                if !(i.beta > 0.0 && i.beta.is_finite()) {
                    return bad("problem.integrand.beta must be positive".into());
                }
            }
        }
        if self.certificates.n_samples == 0 {
            return bad("certificates.n_samples must be positive".into());
        }
        let desc = &self.descent;
        if let Alpha::Fixed(a) = desc.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("descent.alpha = {a} must be positive"));
            }
        }
        if desc.max_iter == 0 {
            return bad("descent.max_iter must be at least 1".into());
        }
        if desc.stop_gap.is_some() && desc.stop_ratio.is_some() {
            return bad("descent: set at most one of stop_gap, stop_ratio".into());
        }
        if desc.stop_gap.is_some_and(|g| !(g >= 0.0 && g.is_finite())) {
            return bad("descent.stop_gap must be non-negative".into());
        }
        if desc.stop_ratio.is_some_and(|r| !(r > 0.0 && r < 1.0)) {
            return bad("descent.stop_ratio must lie in (0, 1)".into());
        }
        Ok(())
    }

    pub fn certificate_seed(&self) -> u64 {
        self.certificates.seed.unwrap_or(self.problem.seed)
    }
}
