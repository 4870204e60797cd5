//! Model construction, training, inference and inspection.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::beamform::{envelope_bmode, BeamformGrid, BeamformedImage, ImageKind};
use crate::error::{Error, Result};
use crate::io::write_pgm;
use crate::netspec::{
    archive_size, count_flops, load_weights, nominal_flops, receptive_field, save_weights,
    NetworkSpec, ReceptiveField, Variant,
};
use crate::nn::{train, Network, Sample, Signal, TrainReport};
use crate::pipeline::{
    create_dir, load_samples, write_file, PipelineConfig, BMODE_DYNAMIC_RANGE_DB,
};

/// A trained or freshly initialized variant.
#[derive(Debug, Clone)]
pub enum Model {
    Single(Network),
    /// Independent networks on the real and imaginary planes.
    TwoBranch {
        re: Network,
        im: Network,
    },
}

impl Model {
    /// Xavier-initialized networks; branch `i` draws from stream `i` of `seed`.
    pub fn initialized(variant: Variant, seed: u64) -> Result<Model> {
        let mut nets = NetworkSpec::branches(variant)
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                Network::initialized(spec, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_networks(variant, &mut nets))
    }

    fn from_networks(variant: Variant, nets: &mut Vec<Network>) -> Model {
        match variant {
            Variant::TwoBranch => {
                let im = nets.pop().expect("two branches");
                let re = nets.pop().expect("two branches");
                Model::TwoBranch { re, im }
            }
            _ => Model::Single(nets.pop().expect("one branch")),
        }
    }

    pub fn networks(&self) -> Vec<&Network> {
        match self {
            Model::Single(n) => vec![n],
            Model::TwoBranch { re, im } => vec![re, im],
        }
    }

    /// Two-branch models take a complex input and return a complex output
    /// assembled from the two real branch outputs.
    pub fn forward(&self, x: &Signal) -> Result<Signal> {
        match self {
            Model::Single(n) => n.forward(x),
            Model::TwoBranch { re, im } => {
                let (xr, xi) = split_planes(x)?;
                let yr = re.forward(&xr)?;
                let yi = im.forward(&xi)?;
                join_planes(&yr, &yi)
            }
        }
    }
}

fn split_planes(x: &Signal) -> Result<(Signal, Signal)> {
    let z = x
        .as_complex()
        .ok_or_else(|| Error::Config("two-branch model needs complex input".into()))?;
    Ok((Signal::Real(z.real_part()), Signal::Real(z.imag_part())))
}

fn join_planes(re: &Signal, im: &Signal) -> Result<Signal> {
    match (re, im) {
        (Signal::Real(r), Signal::Real(i)) => Ok(Signal::Complex(
            crate::tensor::ComplexTensor::from_parts(r.shape(), r.data(), i.data())?,
        )),
        _ => Err(Error::Dimension("branch outputs must be real".into())),
    }
}

/// Archive stems of a variant, one per branch.
fn stems(variant: Variant) -> Vec<String> {
    match variant {
        Variant::TwoBranch => vec![format!("{variant}_re"), format!("{variant}_im")],
        _ => vec![variant.to_string()],
    }
}

fn weights_path(models: &Path, stem: &str) -> PathBuf {
    models.join(format!("{stem}.weights"))
}

/// Load every branch archive of `variant` from `models`.
pub fn load_model(models: &Path, variant: Variant) -> Result<Model> {
    let mut nets = NetworkSpec::branches(variant)
        .iter()
        .zip(stems(variant))
        .map(|(spec, stem)| load_weights(weights_path(models, &stem), spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(Model::from_networks(variant, &mut nets))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// One report per branch, with its archive path.
    pub branches: Vec<(PathBuf, TrainReport)>,
}

fn history_text(report: &TrainReport) -> String {
    report
        .history
        .iter()
        .map(|r| format!("{}\t{}\t{}\t{}\n", r.epoch, r.train_loss, r.val_loss, r.lr))
        .collect()
}

/// Train the configured variant on the train/val splits and write one
/// archive and one loss history (`epoch train val lr` per line) per branch.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let variant = cfg.model.variant;
    let kind = cfg.model.kind()?;
    let train_set = load_samples(cfg, "train", kind)?;
    let val_set = load_samples(cfg, "val", kind)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config(
            "training needs non-empty train and val splits".into(),
        ));
    }
    let model = Model::initialized(variant, cfg.trainer.seed)?;
    create_dir(&cfg.paths.models)?;

    let samples =
        |set: &[crate::pipeline::SceneSample], branch: Option<usize>| -> Result<Vec<Sample>> {
            set.iter()
                .map(|s| match branch {
                    None => Ok(s.sample.clone()),
                    Some(b) => {
                        let (xr, xi) = split_planes(&s.sample.input)?;
                        let (yr, yi) = split_planes(&s.sample.target)?;
                        Ok(if b == 0 {
                            Sample {
                                input: xr,
                                target: yr,
                            }
                        } else {
                            Sample {
                                input: xi,
                                target: yi,
                            }
                        })
                    }
                })
                .collect()
        };

    let mut branches = Vec::new();
    let nets: Vec<Network> = model.networks().into_iter().cloned().collect();
    let two = nets.len() == 2;
    for (i, (mut net, stem)) in nets.into_iter().zip(stems(variant)).enumerate() {
        let branch = two.then_some(i);
        log::info!(
            "training {} ({} parameters)",
            net.spec().label,
            net.param_count()
        );
        let report = train(
            &mut net,
            &samples(&train_set, branch)?,
            &samples(&val_set, branch)?,
            &cfg.trainer,
        )?;
        let path = weights_path(&cfg.paths.models, &stem);
        save_weights(&net, &path)?;
        write_file(
            &cfg.paths.models.join(format!("{stem}.loss.tsv")),
            history_text(&report),
        )?;
        branches.push((path, report));
    }
    Ok(TrainOutcome { branches })
}

/// Run the configured variant on every test scene. Writes the output image
/// (rescaled to the input's original units) and its B-mode rendering per
/// scene; returns the written image paths in scene order.
pub fn cmd_infer(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let variant = cfg.model.variant;
    let kind = cfg.model.kind()?;
    let model = load_model(&cfg.paths.models, variant)?;
    let test = load_samples(cfg, "test", kind)?;
    let grid = *cfg.grid.for_kind(kind);
    let dir = cfg.paths.output.join(variant.to_string());
    create_dir(&dir)?;
    test.par_iter()
        .map(|s| {
            let y = model.forward(&s.sample.input)?.scaled(1.0 / s.scale);
            let img = BeamformedImage {
                pixels: y,
                grid,
                tilt_deg: None,
            };
            let path = dir.join(format!("{}.bin", s.name));
            img.save(&path)?;
            write_pgm(
                dir.join(format!("{}.pgm", s.name)),
                &envelope_bmode(&img, BMODE_DYNAMIC_RANGE_DB),
            )?;
            Ok(path)
        })
        .collect()
}

/// Static facts about a variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub variant: Variant,
    pub parameters: usize,
    /// Label, parameter count, receptive field and archive size per branch.
    pub branches: Vec<(String, usize, ReceptiveField, usize)>,
    pub grid: (usize, usize),
    pub flops: u64,
    pub full_grid: (usize, usize),
    pub full_flops: u64,
    pub nominal_flops: f64,
}

/// Parameter count, receptive field and FLOPs of `variant` on `grid` and on
/// the full-size grid of its image kind.
pub fn inspect_model(variant: Variant, grid: &BeamformGrid) -> ModelSummary {
    let specs = NetworkSpec::branches(variant);
    let full = if variant.uses_iq() {
        BeamformGrid::full_iq()
    } else {
        BeamformGrid::full_rf()
    };
    ModelSummary {
        variant,
        parameters: specs.iter().map(NetworkSpec::parameter_count).sum(),
        branches: specs
            .iter()
            .map(|s| {
                (
                    s.label.clone(),
                    s.parameter_count(),
                    receptive_field(s),
                    archive_size(s),
                )
            })
            .collect(),
        grid: (grid.depth_samples, grid.angle_lines),
        flops: count_flops(variant, grid.depth_samples, grid.angle_lines).flops,
        full_grid: (full.depth_samples, full.angle_lines),
        full_flops: count_flops(variant, full.depth_samples, full.angle_lines).flops,
        nominal_flops: nominal_flops(variant),
    }
}

impl fmt::Display for ModelSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.variant.uses_iq() {
            ImageKind::Iq
        } else {
            ImageKind::Rf
        };
        writeln!(f, "model: {} ({kind} input)", self.variant.name())?;
        writeln!(f, "parameters: {}", self.parameters)?;
        for (label, params, rf, bytes) in &self.branches {
            writeln!(
                f,
                "branch {label}: {params} parameters, receptive field {}x{} to {}x{}, archive {bytes} bytes",
                rf.min.0, rf.min.1, rf.max.0, rf.max.1
            )?;
        }
        writeln!(
            f,
            "flops {}x{}: {:.3e}",
            self.grid.0, self.grid.1, self.flops as f64
        )?;
        writeln!(
            f,
            "flops {}x{}: {:.3e} (nominal {:.1e})",
            self.full_grid.0, self.full_grid.1, self.full_flops as f64, self.nominal_flops
        )
    }
}
