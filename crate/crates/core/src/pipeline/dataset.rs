//! Scene simulation to disk and sample loading.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamform::{compound, BeamformedImage, Beamformer, ImageKind};
use crate::error::{Error, Result};
use crate::nn::{Sample, Signal};
use crate::pipeline::{
    create_dir, read_text, scene_name, tilt_file, write_file, PipelineConfig, SPLITS,
};
use crate::sim::{add_noise, demodulate, random_scene, ChannelSimulator, PhantomScene};

/// Summary of a simulated dataset, stored as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Scene count per split, in [`SPLITS`] order.
    pub counts: [usize; 3],
    pub kinds: Vec<ImageKind>,
    pub tilt_angles: Vec<f64>,
    pub input_angles: Vec<f64>,
    pub seed: u64,
}

impl Manifest {
    pub fn load(data: &Path) -> Result<Self> {
        let path = data.join("manifest.json");
        serde_json::from_str(&read_text(&path)?).map_err(|e| Error::Format {
            path,
            reason: e.to_string(),
        })
    }

    /// Error unless images of `kind` were stored.
    pub fn require(&self, kind: ImageKind) -> Result<()> {
        if self.kinds.contains(&kind) {
            Ok(())
        } else {
            Err(Error::Config(format!("dataset holds no {kind} images")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub counts: [usize; 3],
    pub files: usize,
}

struct Beamformers {
    iq: Option<Beamformer>,
    rf: Option<Beamformer>,
}

/// Simulate every scene, beamform each tilt, and write the images and
/// compounds. Scene `i` draws from its own random stream, so the output
/// depends only on the configuration.
pub fn cmd_simulate(cfg: &PipelineConfig) -> Result<SimulateSummary> {
    cfg.validate()?;
    let counts = cfg.dataset.counts();
    let kinds = &cfg.dataset.kinds;
    let bf = Beamformers {
        iq: kinds
            .contains(&ImageKind::Iq)
            .then(|| Beamformer::new(&cfg.acquisition, &cfg.grid.iq, &cfg.das))
            .transpose()?,
        rf: kinds
            .contains(&ImageKind::Rf)
            .then(|| Beamformer::new(&cfg.acquisition, &cfg.grid.rf, &cfg.das))
            .transpose()?,
    };
    let data = &cfg.paths.data;
    create_dir(data)?;
    let mut jobs = Vec::with_capacity(cfg.dataset.scenes);
    let mut index = 0;
    for (split, &n) in SPLITS.iter().zip(&counts) {
        let dir = data.join(split);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        create_dir(&dir)?;
        for _ in 0..n {
            jobs.push((index, dir.join(scene_name(index))));
            index += 1;
        }
    }
    let files: usize = jobs
        .par_iter()
        .map(|(i, dir)| {
            let n = simulate_scene(cfg, &bf, *i as u64, dir)?;
            log::info!("simulated {}", dir.display());
            Ok(n)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    let manifest = Manifest {
        counts,
        kinds: kinds.clone(),
        tilt_angles: cfg.acquisition.tilt_angles.clone(),
        input_angles: cfg.acquisition.input_angles.clone(),
        seed: cfg.dataset.seed,
    };
    write_file(
        &data.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(SimulateSummary { counts, files })
}

fn simulate_scene(cfg: &PipelineConfig, bf: &Beamformers, index: u64, dir: &Path) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.dataset.seed);
    rng.set_stream(index);
    let scene = random_scene(&cfg.scene, &mut rng)?;
    create_dir(dir)?;
    write_file(
        &dir.join("annotations.json"),
        serde_json::to_string_pretty(&scene.annotations()).expect("annotations serialize"),
    )?;

    let acq = &cfg.acquisition;
    let sim = ChannelSimulator::new(acq, &scene)?;
    let mut iq_images = Vec::new();
    let mut rf_images = Vec::new();
    for &tilt in &acq.tilt_angles {
        let mut rf = sim.simulate(tilt);
        add_noise(&mut rf, acq.noise_rms, &mut rng);
        if let Some(b) = &bf.iq {
            iq_images.push(b.iq(&demodulate(&rf, acq), tilt)?);
        }
        if let Some(b) = &bf.rf {
            rf_images.push(b.rf(&rf, tilt)?);
        }
    }
    let mut files = 1;
    for (kind, images) in [(ImageKind::Iq, iq_images), (ImageKind::Rf, rf_images)] {
        if images.is_empty() {
            continue;
        }
        let sub = dir.join(kind.as_str());
        create_dir(&sub)?;
        for img in &images {
            img.save(sub.join(tilt_file(img.tilt_deg.expect("single transmit"))))?;
        }
        compound(&images)?.save(sub.join("target.bin"))?;
        let inputs = select_inputs(&images, &acq.input_angles)?;
        compound(&inputs)?.save(sub.join("baseline.bin"))?;
        files += images.len() + 2;
    }
    Ok(files)
}

fn select_inputs(images: &[BeamformedImage], angles: &[f64]) -> Result<Vec<BeamformedImage>> {
    angles
        .iter()
        .map(|&a| {
            images
                .iter()
                .find(|img| img.tilt_deg.is_some_and(|t| (t - a).abs() < 1e-9))
                .cloned()
                .ok_or_else(|| Error::Config(format!("input angle {a}° was not simulated")))
        })
        .collect()
}

/// Scene directories of a split, sorted by name.
pub fn scene_dirs(data: &Path, split: &str) -> Result<Vec<PathBuf>> {
    let dir = data.join(split);
    let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&dir, e))?;
        if entry.path().is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// One scene prepared for the networks: input tilts stacked on the channel
/// axis and the full compound as target, both multiplied by `scale`, the
/// reciprocal RMS of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub name: String,
    pub sample: Sample,
    pub scale: f64,
    pub annotations: PhantomScene,
}

pub fn load_samples(
    cfg: &PipelineConfig,
    split: &str,
    kind: ImageKind,
) -> Result<Vec<SceneSample>> {
    Manifest::load(&cfg.paths.data)?.require(kind)?;
    let grid = cfg.grid.for_kind(kind);
    scene_dirs(&cfg.paths.data, split)?
        .par_iter()
        .map(|dir| {
            let sub = dir.join(kind.as_str());
            let inputs = cfg
                .acquisition
                .input_angles
                .iter()
                .map(|&a| BeamformedImage::load(sub.join(tilt_file(a)), grid).map(|img| img.pixels))
                .collect::<Result<Vec<_>>>()?;
            let input = Signal::concat(&inputs)?;
            let target = BeamformedImage::load(sub.join("target.bin"), grid)?.pixels;
            let values = input.values();
            let rms =
                (values.iter().map(|v| v * v).sum::<f64>() / input.shape().len() as f64).sqrt();
            let scale = if rms > 0.0 { 1.0 / rms } else { 1.0 };
            let path = dir.join("annotations.json");
            let annotations =
                serde_json::from_str(&read_text(&path)?).map_err(|e| Error::Format {
                    path: path.clone(),
                    reason: e.to_string(),
                })?;
            Ok(SceneSample {
                name: dir
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned(),
                sample: Sample {
                    input: input.scaled(scale),
                    target: target.scaled(scale),
                },
                scale,
                annotations,
            })
        })
        .collect()
}
