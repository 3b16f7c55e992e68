//! One TOML document configures every stage. Every field has a default and
//! unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::PerturbConfig;
use crate::error::{Error, Result};
use crate::heatmap::GtConfig;
use crate::nnet::{KinematicConfig, NetConfig, TrainConfig};
use crate::raster::RasterConfig;
use crate::scenario::{GeneratorConfig, DEFAULT_TURN_THRESHOLD};
use crate::sim::{OodConfig, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Rotate each training raster by uniform noise within the raster's
    /// `orientation_noise` half-range.
    pub orientation_noise: bool,
    pub perturb: PerturbConfig,
    /// Yaw shift separating straight driving from turns when balancing.
    pub turn_threshold: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            orientation_noise: true,
            perturb: PerturbConfig::default(),
            turn_threshold: DEFAULT_TURN_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Label every `stride`-th frame of each scenario.
    pub stride: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { stride: 5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub scenarios: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub generator: GeneratorConfig,
    pub raster: RasterConfig,
    pub gt: GtConfig,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub dataset: DatasetConfig,
    pub kinematic: KinematicConfig,
    pub sim: SimConfig,
    pub ood: OodConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            field: "config".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.raster.validate()?;
        self.gt.validate()?;
        self.net.validate()?;
        self.train.validate()?;
        self.augment.perturb.validate()?;
        self.sim.validate()?;
        self.ood.validate()?;
        if self.dataset.stride == 0 {
            return Err(Error::Config("dataset stride must be positive".into()));
        }
        if self.raster.height % 8 != 0 || self.raster.width % 8 != 0 {
            return Err(Error::Config(format!(
                "raster {}x{} must be a multiple of 8 for the network",
                self.raster.height, self.raster.width
            )));
        }
        if self.sim.start_frame < self.raster.n_history {
            return Err(Error::Config(
                "sim.start_frame must leave room for the raster history".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.raster = RasterConfig::with_size(64);
        cfg.train.steps = 123;
        cfg.paths.dataset = Some("data/ds".into());
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_sections_and_unknown_keys() {
        let cfg = RunConfig::from_toml("[train]\nlr = 0.001\n[raster]\nheight = 64\nwidth = 64\n").unwrap();
        assert_eq!(cfg.train.lr, 0.001);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.raster.height, 64);
        assert!(matches!(RunConfig::from_toml("[train]\nlearning_rate = 1.0\n"), Err(Error::Parse { .. })));
        assert!(matches!(RunConfig::from_toml("bogus = 1\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(matches!(RunConfig::from_toml("[raster]\nheight = 60\nwidth = 60\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("[augment.perturb]\nprobability = 2.0\n"), Err(Error::Config(_))));
    }
}
