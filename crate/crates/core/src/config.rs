//! Run configuration: one JSON document for every generation and evaluation stage.
//!
//! Unknown keys are rejected at every level. The config hash recorded in manifests
//! covers everything that influences outputs, which excludes the worker count.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cavitygen::{CavityRanges, ShapeProfile};
use crate::compositor::AverageOver;
use crate::error::{Error, Result};
use crate::finecrack::RefineParams;

pub const ENV_WORKERS: &str = "SYNTHFORGE_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "camelCase")]
pub struct DaclonsynthConfig {
    pub samples: u64,
    pub average_over: AverageOver,
}

impl Default for DaclonsynthConfig {
    fn default() -> Self {
        Self {
            samples: 5000,
            average_over: AverageOver::Targets,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "camelCase")]
pub struct SynthcrackConfig {
    pub samples: u64,
    /// Defaults to [`CRACK_PIXELS_PER_SHAPE`] per target shape, scaled by
    /// `resolution / 512`: crack pixels grow with length, not area, since widths stay
    /// at least a pixel.
    pub target_total_pixels: Option<u64>,
    /// Defaults to [`CRACK_SHAPES_PER_SAMPLE`] per sample.
    pub target_total_shapes: Option<u64>,
}

/// dacl10k's Crack row (120,670,614 px over 4,446 shapes at ~4.07 Mpx per image)
/// scaled to 512x512.
pub const CRACK_PIXELS_PER_SHAPE: u64 = 1_748;
pub const CRACK_SHAPES_PER_SAMPLE: u64 = 2;

impl Default for SynthcrackConfig {
    fn default() -> Self {
        Self {
            samples: 5000,
            target_total_pixels: None,
            target_total_shapes: None,
        }
    }
}

impl SynthcrackConfig {
    /// `(total_pixels, total_shapes)` with defaults filled in for `resolution`.
    pub fn targets(&self, resolution: u32) -> (u64, u64) {
        let shapes = self.target_total_shapes.unwrap_or(self.samples * CRACK_SHAPES_PER_SAMPLE);
        let scale = resolution as f64 / 512.0;
        let pixels = self
            .target_total_pixels
            .unwrap_or_else(|| (shapes as f64 * CRACK_PIXELS_PER_SHAPE as f64 * scale).round() as u64);
        (pixels, shapes)
    }

    pub fn budget(&self, resolution: u32) -> crate::crackgen::CrackBudget {
        let (target_total_pixels, target_total_shapes) = self.targets(resolution);
        crate::crackgen::CrackBudget {
            target_total_pixels,
            target_total_shapes,
            n_samples: self.samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "camelCase")]
pub struct SynthcavityConfig {
    pub samples: u64,
    pub profile: ShapeProfile,
    pub ranges: CavityRanges,
}

impl Default for SynthcavityConfig {
    fn default() -> Self {
        Self {
            samples: 5000,
            profile: ShapeProfile::default(),
            ranges: CavityRanges::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "camelCase")]
pub struct PerturbSettings {
    /// `"all"` or a comma-separated list of kind names.
    pub kinds: String,
    pub severity: u8,
}

impl Default for PerturbSettings {
    fn default() -> Self {
        Self {
            kinds: "all".into(),
            severity: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "camelCase")]
pub struct RunConfig {
    /// Root of a real annotated dataset (needed for daclonsynth).
    pub dataset_root: Option<PathBuf>,
    pub resolution: u32,
    pub master_seed: u64,
    pub workers: Option<usize>,
    pub daclonsynth: DaclonsynthConfig,
    pub synthcrack: SynthcrackConfig,
    pub synthcavity: SynthcavityConfig,
    pub perturb: PerturbSettings,
    pub finecrack: RefineParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_root: None,
            resolution: 512,
            master_seed: 0,
            workers: None,
            daclonsynth: DaclonsynthConfig::default(),
            synthcrack: SynthcrackConfig::default(),
            synthcavity: SynthcavityConfig::default(),
            perturb: PerturbSettings::default(),
            finecrack: RefineParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::json(origin, &e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution == 0 {
            return Err(Error::InvalidParam("resolution must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidParam("workers must be positive".into()));
        }
        if !(1..=5).contains(&self.perturb.severity) {
            return Err(Error::InvalidParam(format!("severity {} not in [1, 5]", self.perturb.severity)));
        }
        crate::perturb::PerturbKind::parse_list(&self.perturb.kinds)?;
        let r = &self.synthcavity.ranges;
        if r.layers.0 == 0 || r.layers.0 > r.layers.1 || r.min_area == 0 {
            return Err(Error::InvalidParam("invalid synthcavity ranges".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring `workers`.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.workers = None;
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Worker count: explicit override, then the environment, then the config, then
    /// the machine's parallelism.
    pub fn resolve_workers(&self, flag: Option<usize>) -> Result<usize> {
        if let Some(n) = flag {
            return positive(n);
        }
        if let Ok(v) = std::env::var(ENV_WORKERS) {
            let n = v
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidParam(format!("{ENV_WORKERS}={v:?} is not a count")))?;
            return positive(n);
        }
        if let Some(n) = self.workers {
            return positive(n);
        }
        Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

fn positive(n: usize) -> Result<usize> {
    if n == 0 {
        Err(Error::InvalidParam("worker count must be positive".into()))
    } else {
        Ok(n)
    }
}
