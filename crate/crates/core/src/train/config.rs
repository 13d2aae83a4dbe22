//! Training configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density::DensifyConfig;
use crate::error::{Error, Result};
use crate::geometry::sh::check_degree;
use crate::losses::{GradientMagnitudeProxy, LossWeights, NoPerceptual, PerceptualProvider};
use crate::raster::Precision;
use crate::skinning::FieldConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    /// Center rate at the first step, multiplied by the scene extent.
    pub center_init: f64,
    /// Center rate at the last step, multiplied by the scene extent.
    pub center_final: f64,
    pub sh_dc: f64,
    pub sh_rest: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            center_init: 1.6e-4,
            center_final: 1.6e-6,
            sh_dc: 2.5e-3,
            sh_rest: 2.5e-3 / 20.0,
            opacity: 5e-2,
            scale: 5e-3,
            rotation: 1e-3,
        }
    }
}

impl LearningRates {
    /// Log-linear interpolation from `center_init` to `center_final`.
    pub fn center_at(&self, iteration: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.center_init;
        }
        let t = (iteration as f64 / (total - 1) as f64).clamp(0.0, 1.0);
        (self.center_init.ln() * (1.0 - t) + self.center_final.ln() * t).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerceptualKind {
    #[default]
    None,
    GradientMagnitude,
}

impl PerceptualKind {
    pub fn provider(self) -> Box<dyn PerceptualProvider> {
        match self {
            PerceptualKind::None => Box::new(NoPerceptual),
            PerceptualKind::GradientMagnitude => Box::new(GradientMagnitudeProxy::default()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightFieldSettings {
    pub resolution: [usize; 3],
    pub diffusion_iters: usize,
    pub margin: f64,
}

impl Default for WeightFieldSettings {
    fn default() -> Self {
        let f = FieldConfig::default();
        WeightFieldSettings { resolution: f.resolution, diffusion_iters: f.diffusion_iters, margin: f.margin }
    }
}

impl WeightFieldSettings {
    pub fn field_config(&self) -> FieldConfig {
        FieldConfig { resolution: self.resolution, diffusion_iters: self.diffusion_iters, margin: self.margin }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset: PathBuf,
    pub output: PathBuf,
    pub iterations: usize,
    pub seed: u64,
    /// Reproducibility switch; recorded in the checkpoint hash.
    pub deterministic: bool,
    pub precision: Precision,
    pub sh_degree: usize,
    /// One more SH band becomes active every this many iterations.
    pub sh_warmup_interval: usize,
    pub tile_size: usize,
    /// Iterations between intermediate checkpoints; 0 writes only the final one.
    pub checkpoint_interval: usize,
    /// Send the normal loss through the depth map.
    pub normal_depth_path: bool,
    pub perceptual: PerceptualKind,
    pub learning_rates: LearningRates,
    pub loss: LossWeights,
    pub densify: DensifyConfig,
    pub weight_field: WeightFieldSettings,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dataset: PathBuf::from("data"),
            output: PathBuf::from("out"),
            iterations: 30000,
            seed: 0,
            deterministic: true,
            precision: Precision::F64,
            sh_degree: 3,
            sh_warmup_interval: 1000,
            tile_size: 16,
            checkpoint_interval: 0,
            normal_depth_path: true,
            perceptual: PerceptualKind::None,
            learning_rates: LearningRates::default(),
            loss: LossWeights::default(),
            densify: DensifyConfig::default(),
            weight_field: WeightFieldSettings::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative dataset and output paths resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::load(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.dataset.is_relative() {
            cfg.dataset = base.join(&cfg.dataset);
        }
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        check_degree(self.sh_degree)?;
        if self.tile_size < 8 {
            return Err(Error::Config(format!("tile_size must be at least 8, got {}", self.tile_size)));
        }
        if self.sh_warmup_interval == 0 {
            return Err(Error::Config("sh_warmup_interval must be positive".into()));
        }
        let lr = &self.learning_rates;
        for (name, v) in [
            ("center_init", lr.center_init),
            ("center_final", lr.center_final),
            ("sh_dc", lr.sh_dc),
            ("sh_rest", lr.sh_rest),
            ("opacity", lr.opacity),
            ("scale", lr.scale),
            ("rotation", lr.rotation),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("learning_rates.{name} must be positive, got {v}")));
            }
        }
        if self.weight_field.resolution.contains(&0) {
            return Err(Error::Config("weight_field.resolution entries must be positive".into()));
        }
        self.loss.validate()?;
        self.densify.validate()
    }

    /// SHA-256 of the canonical TOML form, excluding the dataset and output paths.
    pub fn hash(&self) -> [u8; 32] {
        let mut c = self.clone();
        c.dataset = PathBuf::new();
        c.output = PathBuf::new();
        Sha256::digest(c.to_toml().as_bytes()).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = TrainConfig::from_toml("").unwrap();
        assert_eq!(c, TrainConfig::default());
        assert_eq!(c.iterations, 30000);
        assert_eq!(c.loss.dssim, 0.2);
        assert_eq!(c.densify.eccentricity_threshold, 9.0);
    }

    #[test]
    fn round_trip_through_toml() {
        let mut c = TrainConfig::default();
        c.iterations = 1234;
        c.precision = Precision::F32;
        c.densify.eccentricity_threshold = f64::INFINITY;
        let back = TrainConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn nested_overrides_and_errors() {
        let c = TrainConfig::from_toml("iterations = 10\n[loss]\narea = 0.0\n[densify]\neccentricity_definition = \"focal-ratio\"\n").unwrap();
        assert_eq!(c.iterations, 10);
        assert_eq!(c.loss.area, 0.0);
        assert_eq!(c.loss.normal, 0.05);
        assert!(TrainConfig::from_toml("bogus = 1").is_err());
        assert!(TrainConfig::from_toml("tile_size = 4").is_err());
        assert!(TrainConfig::from_toml("[loss]\nmask = -1.0").is_err());
        assert!(TrainConfig::from_toml("sh_degree = 4").is_err());
    }

    #[test]
    fn center_rate_decays_exponentially() {
        let lr = LearningRates::default();
        assert!((lr.center_at(0, 101) - 1.6e-4).abs() < 1e-18);
        assert!((lr.center_at(100, 101) - 1.6e-6).abs() < 1e-18);
        assert!((lr.center_at(50, 101) - 1.6e-5).abs() < 1e-15);
    }
}
