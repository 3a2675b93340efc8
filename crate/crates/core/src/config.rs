//! Run configuration shared by every CLI stage, and the synth manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{RolloutConfig, StepConfig};
use crate::model::{AdamConfig, Architecture, TrainConfig};
use crate::patches::DatasetConfig;
use crate::poincare::PoincareConfig;
use crate::synth::ShapeSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub rho: f64,
    pub band_px: f64,
    pub offsets_deg: Vec<f64>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            rho: 0.05,
            band_px: 32.0,
            offsets_deg: vec![45.0, -45.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Layer list; the default architecture for the patch size when absent.
    pub arch: Option<Architecture>,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            arch: None,
            epochs: 10,
            batch: 64,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutSection {
    pub h_min: f64,
    pub h_max: f64,
    pub renormalize: bool,
    /// Positions required before the section is placed.
    pub warmup: usize,
    /// Convergence threshold on the Poincaré map magnitudes, px.
    pub eps: f64,
    pub k: usize,
    pub max_steps: usize,
    pub n_points: usize,
}

impl Default for RolloutSection {
    fn default() -> Self {
        let s = StepConfig::default();
        let p = PoincareConfig::default();
        Self {
            h_min: s.h_min,
            h_max: s.h_max,
            renormalize: s.renormalize,
            warmup: p.warmup,
            eps: p.eps,
            k: p.k,
            max_steps: p.max_steps,
            n_points: p.n_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub dataset: u64,
    pub init: u64,
    pub shuffle: u64,
    /// Drives the random initial heading of a rollout.
    pub rollout: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            dataset: 0,
            init: 1,
            shuffle: 2,
            rollout: 3,
        }
    }
}

/// Every tunable of the pipeline. Unknown keys are rejected and missing keys
/// take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub patch_size: usize,
    /// Step length, px.
    pub h: f64,
    pub spacing_mm: f64,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub rollout: RolloutSection,
    pub seeds: Seeds,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            patch_size: 64,
            h: 2.0,
            spacing_mm: 1.0,
            dataset: DatasetSection::default(),
            model: ModelSection::default(),
            rollout: RolloutSection::default(),
            seeds: Seeds::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let cfg = Self::from_json(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.patch_size < 8 || self.patch_size % 2 != 0 {
            return bad(format!("patch_size {} must be even and at least 8", self.patch_size));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad(format!("h {} must be positive", self.h));
        }
        if !(self.spacing_mm > 0.0 && self.spacing_mm.is_finite()) {
            return bad(format!("spacing_mm {} must be positive", self.spacing_mm));
        }
        let d = &self.dataset;
        if !(d.rho > 0.0 && d.rho <= 1.0) {
            return bad(format!("dataset.rho {} outside (0, 1]", d.rho));
        }
        if !(d.band_px > 0.0 && d.band_px.is_finite()) {
            return bad(format!("dataset.band_px {} must be positive", d.band_px));
        }
        if d.offsets_deg.iter().any(|o| !(o.abs() < 180.0)) {
            return bad("dataset.offsets_deg must lie in (-180, 180)".into());
        }
        let m = &self.model;
        if m.epochs == 0 || m.batch == 0 {
            return bad("model.epochs and model.batch must be positive".into());
        }
        if !(m.lr > 0.0) || !(0.0..1.0).contains(&m.beta1) || !(0.0..1.0).contains(&m.beta2) || !(m.eps > 0.0) {
            return bad("model Adam hyperparameters out of range".into());
        }
        if let Some(a) = &m.arch {
            if a.input_size != self.patch_size {
                return bad(format!(
                    "model.arch.input_size {} differs from patch_size {}",
                    a.input_size, self.patch_size
                ));
            }
            a.plan().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        let r = &self.rollout;
        if !(r.h_min > 0.0 && r.h_min <= r.h_max) {
            return bad(format!("rollout step bounds [{}, {}]", r.h_min, r.h_max));
        }
        if r.warmup < 3 || r.k == 0 || r.max_steps == 0 || r.n_points < 3 || !(r.eps > 0.0) {
            return bad("rollout warmup >= 3, k >= 1, max_steps >= 1, n_points >= 3, eps > 0 required".into());
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        self.model
            .arch
            .clone()
            .unwrap_or_else(|| Architecture::default_for(self.patch_size))
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            rho: self.dataset.rho,
            band_px: self.dataset.band_px,
            offsets: self.dataset.offsets_deg.iter().map(|d| d.to_radians()).collect(),
            h: self.h,
            patch_size: self.patch_size,
            seed: self.seeds.dataset,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.model.epochs,
            batch: self.model.batch,
            adam: AdamConfig {
                lr: self.model.lr,
                beta1: self.model.beta1,
                beta2: self.model.beta2,
                eps: self.model.eps,
            },
            seed: self.seeds.shuffle,
        }
    }

    pub fn rollout_config(&self) -> RolloutConfig {
        let r = &self.rollout;
        RolloutConfig {
            step: StepConfig {
                patch_size: self.patch_size,
                h: self.h,
                h_min: r.h_min,
                h_max: r.h_max,
                renormalize: r.renormalize,
            },
            poincare: PoincareConfig {
                warmup: r.warmup,
                eps: r.eps,
                k: r.k,
                max_steps: r.max_steps,
                n_points: r.n_points,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestPair {
    /// Paths are relative to the manifest's directory.
    pub image: PathBuf,
    pub mask: PathBuf,
    pub index: usize,
    /// Held-out pair (odd index).
    pub test: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub pairs: Vec<ManifestPair>,
    pub spec: ShapeSpec,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
