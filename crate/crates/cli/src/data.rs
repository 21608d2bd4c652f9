//! Dataset and parameter-snapshot files (JSON) and synthetic datasets.

use std::path::Path;

use plgd_core::integrand::{Dataset, Sample};
use plgd_core::rng;
use serde::{Deserialize, Serialize};

use crate::config::{SyntheticConfig, SyntheticKind};
use crate::error::CliError;

/// Input points, one `Vec` per point.
pub type Points = Vec<Vec<f64>>;

/// Which half of a GAN mixture a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Real,
    Generated,
}

/// On-disk dataset:
///
/// ```json
/// { "inputs": [[0.0, 1.0], [1.0, 0.0]],
///   "targets": [[1.0], [-1.0]],
///   "weights": [0.5, 0.5],
///   "side": ["real", "generated"] }
/// ```
///
/// `targets`, `weights` and `side` are optional; weights default to uniform
/// and must sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub inputs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Vec<Side>>,
}

impl DatasetFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let file: DatasetFile =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let n = self.inputs.len();
        if n == 0 {
            return Err(CliError::Data("dataset has no inputs".into()));
        }
        let d = self.inputs[0].len();
        if let Some(i) = self
            .inputs
            .iter()
            .position(|x| x.len() != d || x.iter().any(|v| !v.is_finite()))
        {
            return Err(CliError::Data(format!(
                "input {i} has the wrong length or a non-finite entry"
            )));
        }
        let lens = [
            ("targets", self.targets.as_ref().map(Vec::len)),
            ("weights", self.weights.as_ref().map(Vec::len)),
            ("side", self.side.as_ref().map(Vec::len)),
        ];
        for (name, len) in lens {
            if let Some(len) = len.filter(|&len| len != n) {
                return Err(CliError::Data(format!("{name} has {len} entries for {n} inputs")));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    /// Supervised dataset: every input paired with its target.
    pub fn to_dataset(&self) -> Result<Dataset, CliError> {
        let samples: Vec<Sample> = match &self.targets {
            Some(t) => self
                .inputs
                .iter()
                .zip(t)
                .map(|(x, t)| Sample::with_target(x.clone(), t.clone()))
                .collect(),
            None => self.inputs.iter().cloned().map(Sample::new).collect(),
        };
        let data = match &self.weights {
            Some(w) => Dataset::new(samples, w.clone())?,
            None => Dataset::uniform(samples)?,
        };
        Ok(data)
    }

    /// Splits inputs into real and generated samples by `side`.
    pub fn split_sides(&self) -> Result<(Points, Points), CliError> {
        let Some(side) = &self.side else {
            return Err(CliError::Data("gan datasets need a side label per input".into()));
        };
        if self.weights.is_some() {
            return Err(CliError::Data(
                "gan dataset weights are fixed by the mixture; drop weights".into(),
            ));
        }
        let mut real = Vec::new();
        let mut generated = Vec::new();
        for (x, s) in self.inputs.iter().zip(side) {
            match s {
                Side::Real => real.push(x.clone()),
                Side::Generated => generated.push(x.clone()),
            }
        }
        Ok((real, generated))
    }
}

/// Synthetic dataset. Gaussian inputs are standard normal; targets are
/// standard normal, or uniform labels in `1..=classes`. When `sides` is set
/// the first half is labelled real and shifted by `+1`, the rest generated
/// and shifted by `−1`.
pub fn synthetic(cfg: &SyntheticConfig, default_seed: u64, sides: bool) -> DatasetFile {
    let mut r = rng::seeded(cfg.seed.unwrap_or(default_seed));
    let n = cfg.points;
    let inputs: Vec<Vec<f64>> = (0..n)
        .map(|i| match cfg.kind {
            SyntheticKind::Gaussian => rng::gaussian_vec(&mut r, cfg.input_dim),
            SyntheticKind::Orthonormal => {
                let mut e = vec![0.0; cfg.input_dim];
                e[i] = 1.0;
                e
            }
        })
        .collect();
    if sides {
        let half = n.div_ceil(2);
        let side: Vec<Side> = (0..n)
            .map(|i| if i < half { Side::Real } else { Side::Generated })
            .collect();
        let inputs = inputs
            .into_iter()
            .zip(&side)
            .map(|(x, s)| {
                let shift = if *s == Side::Real { 1.0 } else { -1.0 };
                x.into_iter().map(|v| v + shift).collect()
            })
            .collect();
        return DatasetFile {
            inputs,
            targets: None,
            weights: None,
            side: Some(side),
        };
    }
    let targets = match cfg.classes {
        Some(c) => (0..n)
            .map(|_| {
                // Uniform on [-1, 1], bucketed into the labels.
                let u = rng::unit_ball_point(&mut r, 1)[0];
                let k = (((u + 1.0) * 0.5 * c as f64) as usize).min(c - 1) + 1;
                vec![k as f64]
            })
            .collect(),
        None => (0..n).map(|_| rng::gaussian_vec(&mut r, cfg.output_dim)).collect(),
    };
    DatasetFile {
        inputs,
        targets: Some(targets),
        weights: None,
        side: None,
    }
}

/// Parameter snapshot `{ "shape": [p], "data": [...] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSnapshot {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamSnapshot {
    pub fn new(data: Vec<f64>) -> Self {
        ParamSnapshot {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let snap: ParamSnapshot =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let size: usize = snap.shape.iter().product();
        if size != snap.data.len() {
            return Err(CliError::Data(format!(
                "{}: shape {:?} holds {size} values but data has {}",
                path.display(),
                snap.shape,
                snap.data.len()
            )));
        }
        Ok(snap)
    }
}
