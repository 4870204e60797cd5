//! Per-image metric bundles and set-level summaries.

use std::fmt;

use serde::Serialize;

use crate::beamform::BeamformGrid;
use crate::error::{Error, Result};
use crate::metrics::{
    cnr, cr, gcnr, lateral_resolution_fwhm, mutual_information, psnr, ssim, Envelope, RegionMask,
    HISTOGRAM_BINS,
};
use crate::sim::PhantomScene;

/// Guard between a disk and its background annulus, in pixels.
pub const GUARD_PX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContrastMetrics {
    pub cr: f64,
    pub cnr: f64,
    pub gcnr: f64,
}

/// All measures for one reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageMetrics {
    pub psnr: f64,
    pub ssim: f64,
    pub mi: f64,
    /// One entry per annotated disk.
    pub contrast: Vec<ContrastMetrics>,
    /// One entry per wire whose profile could be measured.
    pub lr_mm: Vec<f64>,
}

/// Compare `recon` with `reference` and measure the annotated regions of `recon`.
/// Wires whose profile never drops to half maximum inside the image are
/// skipped with a warning.
pub fn evaluate_image(
    recon: &Envelope,
    reference: &Envelope,
    annotations: &PhantomScene,
    grid: &BeamformGrid,
) -> Result<ImageMetrics> {
    let mut contrast = Vec::with_capacity(annotations.disks.len());
    for disk in &annotations.disks {
        let mask = RegionMask::from_disk(grid, disk, GUARD_PX)?;
        contrast.push(ContrastMetrics {
            cr: cr(recon, &mask)?,
            cnr: cnr(recon, &mask)?,
            gcnr: gcnr(recon, &mask, HISTOGRAM_BINS)?,
        });
    }
    let mut lr_mm = Vec::with_capacity(annotations.wires.len());
    for wire in &annotations.wires {
        match lateral_resolution_fwhm(recon, wire, grid) {
            Ok(v) => lr_mm.push(v),
            Err(Error::Degenerate(msg)) => {
                log::warn!("wire at ({:.4}, {:.4}) m skipped: {msg}", wire.x, wire.z)
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ImageMetrics {
        psnr: psnr(recon, reference)?,
        ssim: ssim(recon, reference)?,
        mi: mutual_information(recon, reference, HISTOGRAM_BINS)?,
        contrast,
        lr_mm,
    })
}

/// Mean and population standard deviation of a set of values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                count,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let std = if mean.is_infinite() {
            // all-infinite sets (identical images) have no spread
            if values.iter().all(|&v| v == mean) {
                0.0
            } else {
                f64::NAN
            }
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64).sqrt()
        };
        Self { mean, std, count }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.count == 0 {
            return write!(f, "n/a");
        }
        let prec = f.precision().unwrap_or(3);
        write!(f, "{:.prec$} ± {:.prec$}", self.mean, self.std)
    }
}

/// Set-level summary of one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub method: String,
    pub samples: usize,
    pub psnr: Summary,
    pub ssim: Summary,
    pub mi: Summary,
    pub cr: Summary,
    pub cnr: Summary,
    pub gcnr: Summary,
    pub lr_mm: Summary,
}

impl MetricsReport {
    /// Region measures are pooled over every disk (wire) of every image.
    pub fn from_images(method: impl Into<String>, images: &[ImageMetrics]) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Config("no images to summarize".into()));
        }
        let collect = |f: &dyn Fn(&ImageMetrics) -> Vec<f64>| {
            Summary::of(&images.iter().flat_map(f).collect::<Vec<_>>())
        };
        Ok(Self {
            method: method.into(),
            samples: images.len(),
            psnr: collect(&|m| vec![m.psnr]),
            ssim: collect(&|m| vec![m.ssim]),
            mi: collect(&|m| vec![m.mi]),
            cr: collect(&|m| m.contrast.iter().map(|c| c.cr).collect()),
            cnr: collect(&|m| m.contrast.iter().map(|c| c.cnr).collect()),
            gcnr: collect(&|m| m.contrast.iter().map(|c| c.gcnr).collect()),
            lr_mm: collect(&|m| m.lr_mm.clone()),
        })
    }

    /// One `key: mean ± std` line per metric.
    pub fn to_text(&self) -> String {
        let mut s = format!("method: {}\nsamples: {}\n", self.method, self.samples);
        for (k, v) in self.entries() {
            s.push_str(&format!("{k}: {v:.4} (n={})\n", v.count));
        }
        s
    }

    /// JSON rendering; non-finite values become `null`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    fn entries(&self) -> [(&'static str, Summary); 7] {
        [
            ("psnr_db", self.psnr),
            ("ssim", self.ssim),
            ("mi", self.mi),
            ("cr_db", self.cr),
            ("cnr_db", self.cnr),
            ("gcnr", self.gcnr),
            ("lr_mm", self.lr_mm),
        ]
    }
}

/// Fixed-width comparison table, one row per method.
pub fn format_table(reports: &[MetricsReport]) -> String {
    let header = [
        "method",
        "PSNR [dB]",
        "SSIM",
        "MI",
        "CR [dB]",
        "CNR [dB]",
        "gCNR",
        "LR [mm]",
    ];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![r.method.clone()];
            row.extend(r.entries().iter().map(|(_, v)| format!("{v:.3}")));
            row
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            rows.iter()
                .map(|r| r[i].chars().count())
                .chain([header[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(&header.map(String::from));
    out.push('\n');
    for r in &rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(p: f64) -> ImageMetrics {
        ImageMetrics {
            psnr: p,
            ssim: 0.5,
            mi: 1.0,
            contrast: vec![ContrastMetrics {
                cr: 10.0,
                cnr: 1.0,
                gcnr: 0.8,
            }],
            lr_mm: vec![],
        }
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[1.0, 3.0]);
        assert_eq!((s.mean, s.std, s.count), (2.0, 1.0, 2));
        let inf = Summary::of(&[f64::INFINITY; 3]);
        assert_eq!((inf.mean, inf.std), (f64::INFINITY, 0.0));
        assert!(Summary::of(&[]).mean.is_nan());
    }

    #[test]
    fn report_requires_images() {
        assert!(MetricsReport::from_images("x", &[]).is_err());
        let r = MetricsReport::from_images("x", &[sample(20.0), sample(30.0)]).unwrap();
        assert_eq!(r.psnr.mean, 25.0);
        assert_eq!(r.lr_mm.count, 0);
        assert!(r.to_text().contains("psnr_db: 25.0000 ± 5.0000"));
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["samples"], 2);
        assert!(json["lr_mm"]["mean"].is_null());
        let table = format_table(&[r]);
        assert_eq!(table.lines().count(), 2);
        assert!(table.contains("n/a"));
    }
}
