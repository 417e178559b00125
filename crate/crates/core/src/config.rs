//! JSON run configuration shared by the `compose` and `simulate` commands.
//!
//! Every field is optional in the file; missing fields take the defaults
//! below. Command-line flags override file values, and `DACA_SEED` is
//! consulted only when neither sets a seed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{AugKind, AugOp, AugParams, AugmentError};
use crate::harness::{AdaptationConfig, HarnessError, MockDetectorConfig};
use crate::model::Dims;
use crate::par::Parallelism;
use crate::selection::GridLayout;

pub const SEED_ENV: &str = "DACA_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{SEED_ENV}={0:?} is not an unsigned 64-bit integer")]
    BadSeedEnv(String),
}

impl From<HarnessError> for ConfigError {
    fn from(e: HarnessError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

impl From<AugmentError> for ConfigError {
    fn from(e: AugmentError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub rows: u32,
    pub cols: u32,
}

/// Enable flag and firing probability for a parameterless op.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToggleOp {
    pub enabled: bool,
    pub probability: f64,
}

impl Default for ToggleOp {
    fn default() -> Self {
        toggle(AugKind::HorizontalFlip)
    }
}

/// Same shape as [`ToggleOp`] with the random-crop default probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropOp {
    pub enabled: bool,
    pub probability: f64,
}

impl Default for CropOp {
    fn default() -> Self {
        let t = toggle(AugKind::BBoxSafeRandomCrop);
        Self {
            enabled: t.enabled,
            probability: t.probability,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColorJitterOp {
    pub enabled: bool,
    pub probability: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DownscaleOp {
    pub enabled: bool,
    pub probability: f64,
    pub scale_min: f64,
    pub scale_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BrightnessContrastOp {
    pub enabled: bool,
    pub probability: f64,
    pub brightness_limit: f64,
    pub contrast_limit: f64,
}

fn toggle(kind: AugKind) -> ToggleOp {
    ToggleOp {
        enabled: true,
        probability: AugOp::default_for(kind).probability,
    }
}

impl Default for ColorJitterOp {
    fn default() -> Self {
        let op = AugOp::default_for(AugKind::ColorJitter);
        let AugParams::ColorJitter {
            brightness,
            contrast,
            saturation,
            hue,
        } = op.params
        else {
            unreachable!()
        };
        Self {
            enabled: true,
            probability: op.probability,
            brightness,
            contrast,
            saturation,
            hue,
        }
    }
}

impl Default for DownscaleOp {
    fn default() -> Self {
        let op = AugOp::default_for(AugKind::Downscale);
        let AugParams::Downscale { scale_min, scale_max } = op.params else {
            unreachable!()
        };
        Self {
            enabled: true,
            probability: op.probability,
            scale_min,
            scale_max,
        }
    }
}

impl Default for BrightnessContrastOp {
    fn default() -> Self {
        let op = AugOp::default_for(AugKind::BrightnessContrast);
        let AugParams::BrightnessContrast {
            brightness_limit,
            contrast_limit,
        } = op.params
        else {
            unreachable!()
        };
        Self {
            enabled: true,
            probability: op.probability,
            brightness_limit,
            contrast_limit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub horizontal_flip: ToggleOp,
    pub bbox_safe_random_crop: CropOp,
    pub blur: ToggleOp,
    pub color_jitter: ColorJitterOp,
    pub downscale: DownscaleOp,
    pub brightness_contrast: BrightnessContrastOp,
}

impl AugmentConfig {
    /// Enables exactly the listed kinds, keeping their configured settings.
    pub fn restrict_to(&mut self, kinds: &[AugKind]) {
        let on = |k| kinds.contains(&k);
        self.horizontal_flip.enabled = on(AugKind::HorizontalFlip);
        self.bbox_safe_random_crop.enabled = on(AugKind::BBoxSafeRandomCrop);
        self.blur.enabled = on(AugKind::Blur);
        self.color_jitter.enabled = on(AugKind::ColorJitter);
        self.downscale.enabled = on(AugKind::Downscale);
        self.brightness_contrast.enabled = on(AugKind::BrightnessContrast);
    }

    /// Enabled ops in application order.
    pub fn ops(&self) -> Vec<AugOp> {
        let mut ops = Vec::new();
        let mut push = |enabled: bool, probability: f64, params: AugParams| {
            if enabled {
                ops.push(AugOp { probability, params });
            }
        };
        push(
            self.horizontal_flip.enabled,
            self.horizontal_flip.probability,
            AugParams::HorizontalFlip,
        );
        push(
            self.bbox_safe_random_crop.enabled,
            self.bbox_safe_random_crop.probability,
            AugParams::BBoxSafeRandomCrop,
        );
        push(self.blur.enabled, self.blur.probability, AugParams::Blur);
        let cj = self.color_jitter;
        push(
            cj.enabled,
            cj.probability,
            AugParams::ColorJitter {
                brightness: cj.brightness,
                contrast: cj.contrast,
                saturation: cj.saturation,
                hue: cj.hue,
            },
        );
        let d = self.downscale;
        push(
            d.enabled,
            d.probability,
            AugParams::Downscale {
                scale_min: d.scale_min,
                scale_max: d.scale_max,
            },
        );
        let bc = self.brightness_contrast;
        push(
            bc.enabled,
            bc.probability,
            AugParams::BrightnessContrast {
                brightness_limit: bc.brightness_limit,
                contrast_limit: bc.contrast_limit,
            },
        );
        ops
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// `[width, height]` every image is stretched to before processing.
    pub image_size: (u32, u32),
    pub grid: GridConfig,
    pub conf_threshold: f64,
    pub min_visibility: f64,
    /// Augmented cells; defaults to every cell.
    pub regions: Option<usize>,
    pub augment: AugmentConfig,
    pub seed: Option<u64>,
    pub mock: MockDetectorConfig,
    pub n_iterations: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            image_size: (600, 600),
            grid: GridConfig { rows: 2, cols: 2 },
            conf_threshold: 0.25,
            min_visibility: 0.0,
            regions: None,
            augment: AugmentConfig::default(),
            seed: None,
            mock: MockDetectorConfig::default(),
            n_iterations: 50,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Config = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.image_size.0, self.image_size.1)
    }

    pub fn grid(&self) -> Result<GridLayout, ConfigError> {
        GridLayout::new(self.grid.rows, self.grid.cols).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn regions(&self) -> Result<usize, ConfigError> {
        Ok(self.regions.unwrap_or(self.grid()?.cell_count()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(ConfigError::Invalid("image_size must be positive".into()));
        }
        self.mock.validate()?;
        self.adaptation(0, Parallelism::Sequential)?.validate()?;
        Ok(())
    }

    /// Seed precedence: explicit override, then the file, then `DACA_SEED`,
    /// then 0.
    pub fn resolve_seed(&self, cli: Option<u64>) -> Result<u64, ConfigError> {
        if let Some(seed) = cli.or(self.seed) {
            return Ok(seed);
        }
        match std::env::var(SEED_ENV) {
            Ok(raw) => raw.trim().parse().map_err(|_| ConfigError::BadSeedEnv(raw)),
            Err(_) => Ok(0),
        }
    }

    pub fn adaptation(&self, seed: u64, parallelism: Parallelism) -> Result<AdaptationConfig, ConfigError> {
        let mut cfg = AdaptationConfig::new(self.dims(), self.grid()?, self.augment.ops());
        cfg.regions = self.regions()?;
        cfg.conf_threshold = self.conf_threshold;
        cfg.min_visibility = self.min_visibility;
        cfg.seed = seed;
        cfg.n_iterations = self.n_iterations;
        cfg.parallelism = parallelism;
        Ok(cfg)
    }
}
