//! Evaluation of reconstructions against the full compound, and B-mode export.

use std::path::Path;

use crate::beamform::{envelope_bmode, BeamformGrid, BeamformedImage, ImageKind};
use crate::error::{Error, Result};
use crate::io::{read_record, write_pgm, RecordKind};
use crate::metrics::{evaluate_image, format_table, Envelope, MetricsReport};
use crate::netspec::Variant;
use crate::pipeline::{read_text, scene_dirs, write_file, GridConfig, Manifest, PipelineConfig};
use crate::sim::PhantomScene;

pub const BMODE_DYNAMIC_RANGE_DB: f64 = 60.0;

/// Summarize aligned reconstruction/reference/annotation triples.
pub fn evaluate_set(
    method: &str,
    recon: &[Envelope],
    reference: &[Envelope],
    annotations: &[PhantomScene],
    grid: &BeamformGrid,
) -> Result<MetricsReport> {
    if recon.len() != reference.len() || recon.len() != annotations.len() {
        return Err(Error::Config(format!(
            "misaligned sets: {} reconstructions, {} references, {} annotations",
            recon.len(),
            reference.len(),
            annotations.len()
        )));
    }
    if recon.is_empty() {
        return Err(Error::Config("empty test set".into()));
    }
    let images = recon
        .iter()
        .zip(reference)
        .zip(annotations)
        .map(|((r, y), a)| evaluate_image(r, y, a, grid))
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::from_images(method, &images)
}

/// Row label of standard compounding with `n` transmits.
pub fn baseline_method(kind: ImageKind, n: usize) -> String {
    format!("compound-{n} ({kind})")
}

struct TestScene {
    name: String,
    dir: std::path::PathBuf,
    annotations: PhantomScene,
}

fn load_env(path: &Path, grid: &BeamformGrid) -> Result<Envelope> {
    Envelope::from_image(&BeamformedImage::load(path, grid)?)
}

/// Evaluate standard compounding of the input tilts and every variant with
/// inference output, on the test split. Writes `metrics.json` and
/// `metrics.txt` to the output directory.
pub fn cmd_eval(cfg: &PipelineConfig) -> Result<Vec<MetricsReport>> {
    cfg.validate()?;
    let manifest = Manifest::load(&cfg.paths.data)?;
    let scenes = scene_dirs(&cfg.paths.data, "test")?
        .into_iter()
        .map(|dir| {
            let path = dir.join("annotations.json");
            let annotations =
                serde_json::from_str(&read_text(&path)?).map_err(|e| Error::Format {
                    path,
                    reason: e.to_string(),
                })?;
            Ok(TestScene {
                name: dir
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned(),
                dir,
                annotations,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if scenes.is_empty() {
        return Err(Error::Config("empty test set".into()));
    }
    let annotations: Vec<PhantomScene> = scenes.iter().map(|s| s.annotations.clone()).collect();

    let mut reports = Vec::new();
    for &kind in &manifest.kinds {
        let grid = cfg.grid.for_kind(kind);
        let reference = scenes
            .iter()
            .map(|s| load_env(&s.dir.join(kind.as_str()).join("target.bin"), grid))
            .collect::<Result<Vec<_>>>()?;
        let baseline = scenes
            .iter()
            .map(|s| load_env(&s.dir.join(kind.as_str()).join("baseline.bin"), grid))
            .collect::<Result<Vec<_>>>()?;
        let label = baseline_method(kind, manifest.input_angles.len());
        reports.push(evaluate_set(
            &label,
            &baseline,
            &reference,
            &annotations,
            grid,
        )?);

        for variant in Variant::ALL {
            let native = if variant.uses_iq() {
                ImageKind::Iq
            } else {
                ImageKind::Rf
            };
            let dir = cfg.paths.output.join(variant.to_string());
            if native != kind || !dir.is_dir() {
                continue;
            }
            let mut found: Vec<String> = std::fs::read_dir(&dir)
                .map_err(|e| Error::io(&dir, e))?
                .filter_map(|e| e.ok())
                .filter_map(|e| {
                    let p = e.path();
                    if p.extension()? != "bin" {
                        return None;
                    }
                    Some(p.file_stem()?.to_string_lossy().into_owned())
                })
                .collect();
            found.sort();
            let expected: Vec<&str> = scenes.iter().map(|s| s.name.as_str()).collect();
            if found != expected {
                return Err(Error::Config(format!(
                    "{}: reconstructions do not match the {} test scenes",
                    dir.display(),
                    expected.len()
                )));
            }
            let recon = scenes
                .iter()
                .map(|s| load_env(&dir.join(format!("{}.bin", s.name)), grid))
                .collect::<Result<Vec<_>>>()?;
            reports.push(evaluate_set(
                variant.name(),
                &recon,
                &reference,
                &annotations,
                grid,
            )?);
        }
    }

    let out = &cfg.paths.output;
    crate::pipeline::create_dir(out)?;
    write_file(
        &out.join("metrics.json"),
        serde_json::to_string_pretty(&reports).expect("reports serialize"),
    )?;
    let mut text = format_table(&reports);
    for r in &reports {
        text.push('\n');
        text.push_str(&r.to_text());
    }
    write_file(&out.join("metrics.txt"), text)?;
    Ok(reports)
}

/// Render a stored image as an 8-bit B-mode graymap.
pub fn export_bmode(
    input: &Path,
    output: &Path,
    grids: &GridConfig,
    dynamic_range_db: f64,
) -> Result<()> {
    if !(dynamic_range_db > 0.0) {
        return Err(Error::Config("dynamic range must be positive".into()));
    }
    let kind = match read_record(input)?.kind {
        RecordKind::IqImage => ImageKind::Iq,
        RecordKind::RfImage => ImageKind::Rf,
        other => {
            return Err(Error::Config(format!(
                "{}: {other:?} is not an image",
                input.display()
            )));
        }
    };
    let img = BeamformedImage::load(input, grids.for_kind(kind))?;
    write_pgm(output, &envelope_bmode(&img, dynamic_range_db))
}
