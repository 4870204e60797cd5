//! File-based pipeline: dataset simulation, training, inference, evaluation.
//!
//! Stages communicate only through the directories named in [`PathsConfig`].
//!
//! ```text
//! <data>/manifest.json
//! <data>/<split>/scene_NNNN/annotations.json
//! <data>/<split>/scene_NNNN/<kind>/tilt_+00.0.bin   one per transmit tilt
//! <data>/<split>/scene_NNNN/<kind>/target.bin       compound of every tilt
//! <data>/<split>/scene_NNNN/<kind>/baseline.bin     compound of the input tilts
//! <models>/<variant>[_re|_im].weights, .loss.tsv
//! <output>/<variant>/scene_NNNN.bin, .pgm
//! <output>/metrics.json, metrics.txt
//! ```

mod dataset;
mod evaluate;
mod model;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::beamform::{BeamformGrid, DasOptions, ImageKind};
use crate::error::{Error, Result};
use crate::netspec::Variant;
use crate::nn::TrainerConfig;
use crate::sim::{AcquisitionConfig, SceneParams};

pub use dataset::{cmd_simulate, load_samples, scene_dirs, Manifest, SceneSample, SimulateSummary};
pub use evaluate::{baseline_method, cmd_eval, evaluate_set, export_bmode, BMODE_DYNAMIC_RANGE_DB};
pub use model::{
    cmd_infer, cmd_train, inspect_model, load_model, Model, ModelSummary, TrainOutcome,
};

/// Dataset partition names, in split order.
pub const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Total number of scenes across all splits.
    pub scenes: usize,
    /// Train/validation/test fractions; must sum to 1.
    pub split: [f64; 3],
    pub seed: u64,
    /// Image kinds to beamform and store.
    pub kinds: Vec<ImageKind>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            scenes: 6,
            split: [4.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0],
            seed: 0,
            kinds: vec![ImageKind::Iq, ImageKind::Rf],
        }
    }
}

impl DatasetConfig {
    /// Scene counts per split. Validation and test counts are rounded; the
    /// training split takes the remainder.
    pub fn counts(&self) -> [usize; 3] {
        let n = self.scenes;
        let val = ((n as f64 * self.split[1]).round() as usize).min(n);
        let test = ((n as f64 * self.split[2]).round() as usize).min(n - val);
        [n - val - test, val, test]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub iq: BeamformGrid,
    pub rf: BeamformGrid,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            iq: BeamformGrid::desk_iq(),
            rf: BeamformGrid::desk_rf(),
        }
    }
}

impl GridConfig {
    pub fn for_kind(&self, kind: ImageKind) -> &BeamformGrid {
        match kind {
            ImageKind::Iq => &self.iq,
            ImageKind::Rf => &self.rf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Image kind to train on; defaults to the variant's native kind and
    /// must agree with it when given.
    pub input: Option<ImageKind>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Cid,
            input: None,
        }
    }
}

impl ModelConfig {
    pub fn kind(&self) -> Result<ImageKind> {
        let native = if self.variant.uses_iq() {
            ImageKind::Iq
        } else {
            ImageKind::Rf
        };
        match self.input {
            Some(k) if k != native => Err(Error::Config(format!(
                "{} takes {native} images, configured input is {k}",
                self.variant.name()
            ))),
            _ => Ok(native),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub data: PathBuf,
    pub models: PathBuf,
    pub output: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            data: "data".into(),
            models: "models".into(),
            output: "output".into(),
        }
    }
}

/// Whole-pipeline configuration, read from a TOML file of dotted keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub acquisition: AcquisitionConfig,
    pub scene: SceneParams,
    pub grid: GridConfig,
    pub das: DasOptions,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub trainer: TrainerConfig,
    pub paths: PathsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            acquisition: AcquisitionConfig::default(),
            scene: SceneParams::default(),
            grid: GridConfig::default(),
            das: DasOptions { upsample: 4 },
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            trainer: TrainerConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.acquisition.validate()?;
        self.scene.validate()?;
        self.grid.iq.validate()?;
        self.grid.rf.validate()?;
        self.trainer.validate()?;
        self.model.kind()?;
        let d = &self.dataset;
        if d.split.iter().any(|&f| !(0.0..=1.0).contains(&f))
            || (d.split.iter().sum::<f64>() - 1.0).abs() > 1e-6
        {
            return Err(Error::Config(
                "dataset split fractions must be in [0, 1] and sum to 1".into(),
            ));
        }
        if d.kinds.is_empty() {
            return Err(Error::Config(
                "dataset must store at least one image kind".into(),
            ));
        }
        if self.das.upsample == 0 {
            return Err(Error::Config(
                "das upsample factor must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn scene_name(index: usize) -> String {
    format!("scene_{index:04}")
}

pub(crate) fn tilt_file(deg: f64) -> String {
    format!("tilt_{deg:+05.1}.bin")
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_counts() {
        assert_eq!(DatasetConfig::default().counts(), [4, 1, 1]);
        let d = DatasetConfig {
            scenes: 75,
            ..Default::default()
        };
        assert_eq!(d.counts(), [49, 13, 13]);
        let d = DatasetConfig {
            scenes: 3,
            split: [0.0, 0.0, 1.0],
            ..Default::default()
        };
        assert_eq!(d.counts(), [0, 0, 3]);
    }

    #[test]
    fn toml_round_trip_and_dotted_keys() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let text = "dataset.scenes = 12\nmodel.variant = \"2bid\"\ntrainer.lr0 = 0.001\ngrid.iq.angle_lines = 48\n";
        let cfg = PipelineConfig::from_toml(text).unwrap();
        assert_eq!(cfg.dataset.scenes, 12);
        assert_eq!(cfg.model.variant, Variant::TwoBranch);
        assert_eq!(cfg.trainer.lr0, 1e-3);
        assert_eq!(cfg.grid.iq.angle_lines, 48);
        assert_eq!(cfg.grid.iq.depth_samples, 85);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(PipelineConfig::from_toml("dataset.split = [0.5, 0.5, 0.5]").is_err());
        assert!(PipelineConfig::from_toml("trainer.nonsense = 1").is_err());
        assert!(
            PipelineConfig::from_toml("model.variant = \"cid\"\nmodel.input = \"rf\"").is_err()
        );
        assert!(PipelineConfig::from_toml("model.variant = \"id\"\nmodel.input = \"rf\"").is_ok());
    }

    #[test]
    fn file_names() {
        assert_eq!(tilt_file(-30.0), "tilt_-30.0.bin");
        assert_eq!(tilt_file(0.0), "tilt_+00.0.bin");
        assert_eq!(tilt_file(4.0), "tilt_+04.0.bin");
        assert_eq!(scene_name(7), "scene_0007");
    }
}
