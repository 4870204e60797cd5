//! Delay-and-sum beamforming onto polar grids, coherent compounding and
//! B-mode conversion.

mod envelope;

use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex as Fc;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_record, write_record, RecordKind};
use crate::nn::Signal;
use crate::sim::{AcquisitionConfig, ChannelData, IqChannelData};
use crate::tensor::{Complex, ComplexTensor, RealTensor, Shape};

pub use envelope::{bmode, envelope, envelope_bmode, hilbert_envelope, normalized_envelope};

/// Polar pixel grid: rows are depths, columns are steering angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamformGrid {
    pub depth_samples: usize,
    pub angle_lines: usize,
    /// Metres.
    pub depth_min: f64,
    pub depth_max: f64,
    /// Degrees, centred on the array normal.
    pub sector_deg: f64,
}

impl Default for BeamformGrid {
    fn default() -> Self {
        Self::desk_iq()
    }
}

impl BeamformGrid {
    pub fn new(
        depth_samples: usize,
        angle_lines: usize,
        depth_min: f64,
        depth_max: f64,
        sector_deg: f64,
    ) -> Self {
        Self {
            depth_samples,
            angle_lines,
            depth_min,
            depth_max,
            sector_deg,
        }
    }

    /// Reduced baseband grid (85 × 96 over 10–70 mm).
    pub fn desk_iq() -> Self {
        Self::new(85, 96, 10e-3, 70e-3, 90.0)
    }

    /// Reduced RF grid (254 × 96 over 10–70 mm).
    pub fn desk_rf() -> Self {
        Self::new(254, 96, 10e-3, 70e-3, 90.0)
    }

    /// Full-size baseband grid (338 × 192 over 10–140 mm).
    pub fn full_iq() -> Self {
        Self::new(338, 192, 10e-3, 140e-3, 90.0)
    }

    /// Full-size RF grid (1013 × 192 over 10–140 mm).
    pub fn full_rf() -> Self {
        Self::new(1013, 192, 10e-3, 140e-3, 90.0)
    }

    /// Same region sampled with a different number of depths.
    pub fn with_depth_samples(&self, n: usize) -> Self {
        Self {
            depth_samples: n,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth_samples < 2 || self.angle_lines < 2 {
            return Err(Error::Config(
                "grid needs at least 2 depths and 2 angle lines".into(),
            ));
        }
        if !(self.depth_min >= 0.0 && self.depth_max > self.depth_min) {
            return Err(Error::Config("grid depth range must be increasing".into()));
        }
        if !(self.sector_deg > 0.0 && self.sector_deg < 180.0) {
            return Err(Error::Config("grid sector must lie in (0°, 180°)".into()));
        }
        Ok(())
    }

    pub fn shape(&self) -> Shape {
        Shape::new(1, self.depth_samples, self.angle_lines)
    }

    pub fn axial_spacing(&self) -> f64 {
        (self.depth_max - self.depth_min) / (self.depth_samples - 1) as f64
    }

    /// Angle step (radians).
    pub fn angle_step(&self) -> f64 {
        self.sector_deg.to_radians() / (self.angle_lines - 1) as f64
    }

    pub fn depth(&self, row: usize) -> f64 {
        self.depth_min + row as f64 * self.axial_spacing()
    }

    /// Steering angle of a column (radians).
    pub fn angle(&self, col: usize) -> f64 {
        -self.sector_deg.to_radians() / 2.0 + col as f64 * self.angle_step()
    }

    pub fn position(&self, row: usize, col: usize) -> (f64, f64) {
        let (r, a) = (self.depth(row), self.angle(col));
        (r * a.sin(), r * a.cos())
    }

    /// Fractional `(row, col)` of a Cartesian point.
    pub fn locate(&self, x: f64, z: f64) -> (f64, f64) {
        let r = x.hypot(z);
        let a = x.atan2(z);
        (
            (r - self.depth_min) / self.axial_spacing(),
            (a + self.sector_deg.to_radians() / 2.0) / self.angle_step(),
        )
    }
}

/// Beamformer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DasOptions {
    /// Band-limited (FFT) upsampling of each channel before linear
    /// interpolation; 1 interpolates the raw samples.
    pub upsample: usize,
}

impl Default for DasOptions {
    fn default() -> Self {
        Self { upsample: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageKind {
    Rf,
    Iq,
}

impl ImageKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ImageKind::Rf => "rf",
            ImageKind::Iq => "iq",
        }
    }
}

impl std::fmt::Display for ImageKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A beamformed (or compounded, `tilt_deg = None`) image on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformedImage {
    /// `1 × depth × angle`; real for RF, complex for I/Q.
    pub pixels: Signal,
    pub grid: BeamformGrid,
    pub tilt_deg: Option<f64>,
}

impl BeamformedImage {
    pub fn kind(&self) -> ImageKind {
        match self.pixels {
            Signal::Real(_) => ImageKind::Rf,
            Signal::Complex(_) => ImageKind::Iq,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let kind = match self.kind() {
            ImageKind::Rf => RecordKind::RfImage,
            ImageKind::Iq => RecordKind::IqImage,
        };
        write_record(
            path,
            kind,
            &self.pixels,
            self.tilt_deg.unwrap_or(f64::NAN),
            0.0,
        )
    }

    /// Load an image and check it against `grid`.
    pub fn load(path: impl AsRef<Path>, grid: &BeamformGrid) -> Result<Self> {
        let path = path.as_ref();
        let r = read_record(path)?;
        if !matches!(r.kind, RecordKind::RfImage | RecordKind::IqImage) {
            return Err(Error::Config(format!(
                "{}: not an image record",
                path.display()
            )));
        }
        if r.data.shape() != grid.shape() {
            return Err(Error::Dimension(format!(
                "{}: image is {}, grid is {}",
                path.display(),
                r.data.shape(),
                grid.shape()
            )));
        }
        Ok(Self {
            pixels: r.data,
            grid: *grid,
            tilt_deg: (!r.a.is_nan()).then_some(r.a),
        })
    }
}

fn upsample_rows(rows: &[Vec<Fc<f64>>], factor: usize, real: bool) -> Vec<Vec<Fc<f64>>> {
    if factor <= 1 {
        return rows.to_vec();
    }
    let n = rows.first().map_or(0, Vec::len);
    if n == 0 {
        return rows.to_vec();
    }
    let m = n * factor;
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(m);
    rows.par_iter()
        .map(|row| {
            let mut spec = row.clone();
            fwd.process(&mut spec);
            let mut up = vec![Fc::new(0.0, 0.0); m];
            let half = n / 2;
            if n.is_multiple_of(2) {
                up[..half].copy_from_slice(&spec[..half]);
                up[m - half + 1..].copy_from_slice(&spec[half + 1..]);
                // split the Nyquist bin between ±fs/2
                up[half] = spec[half] * 0.5;
                up[m - half] = spec[half] * 0.5;
            } else {
                up[..=half].copy_from_slice(&spec[..=half]);
                up[m - half..].copy_from_slice(&spec[half + 1..]);
            }
            inv.process(&mut up);
            let s = 1.0 / n as f64;
            up.iter()
                .map(|v| if real { Fc::new(v.re * s, 0.0) } else { v * s })
                .collect()
        })
        .collect()
}

/// Channel rows prepared for fractional-delay lookup.
struct Channels {
    rows: Vec<Vec<Fc<f64>>>,
    fs: f64,
    t0: f64,
}

impl Channels {
    fn from_rf(ch: &ChannelData, opts: &DasOptions) -> Self {
        let len = ch.len();
        let rows: Vec<Vec<Fc<f64>>> = ch
            .samples
            .channel(0)
            .chunks(len.max(1))
            .take(ch.elements())
            .map(|r| r.iter().map(|&v| Fc::new(v, 0.0)).collect())
            .collect();
        let f = opts.upsample.max(1);
        Self {
            rows: upsample_rows(&rows, f, true),
            fs: ch.fs * f as f64,
            t0: ch.t0,
        }
    }

    fn from_iq(ch: &IqChannelData, opts: &DasOptions) -> Self {
        let len = ch.len();
        let (re, im) = (ch.samples.re(), ch.samples.im());
        let rows: Vec<Vec<Fc<f64>>> = (0..ch.elements())
            .map(|e| {
                (0..len)
                    .map(|i| Fc::new(re[e * len + i], im[e * len + i]))
                    .collect()
            })
            .collect();
        let f = opts.upsample.max(1);
        Self {
            rows: upsample_rows(&rows, f, false),
            fs: ch.fs * f as f64,
            t0: ch.t0,
        }
    }

    /// Linear interpolation at time `t`; zero outside the record.
    #[inline]
    fn at(&self, e: usize, t: f64) -> Fc<f64> {
        let row = &self.rows[e];
        let u = (t - self.t0) * self.fs;
        if !(u >= 0.0) {
            return Fc::new(0.0, 0.0);
        }
        let i = u.floor() as usize;
        if i + 1 >= row.len() {
            if i + 1 == row.len() && u == i as f64 {
                return row[i];
            }
            return Fc::new(0.0, 0.0);
        }
        let f = u - i as f64;
        row[i] * (1.0 - f) + row[i + 1] * f
    }
}

/// Delay-and-sum beamformer for one probe and grid. Receive delays and
/// their carrier phasors are computed once and reused for every transmit.
pub struct Beamformer {
    cfg: AcquisitionConfig,
    grid: BeamformGrid,
    opts: DasOptions,
    /// Receive time per pixel per element, pixel-major.
    rx: Vec<f64>,
    /// `exp(+j2π f0 t_rx)` per pixel per element.
    rx_phase: Vec<Fc<f64>>,
}

impl Beamformer {
    pub fn new(cfg: &AcquisitionConfig, grid: &BeamformGrid, opts: &DasOptions) -> Result<Self> {
        grid.validate()?;
        let ne = cfg.element_count;
        let w0 = 2.0 * std::f64::consts::PI * cfg.f0;
        let mut rx = vec![0.0; grid.depth_samples * grid.angle_lines * ne];
        rx.par_chunks_mut(ne).enumerate().for_each(|(p, r)| {
            let (x, z) = grid.position(p / grid.angle_lines, p % grid.angle_lines);
            for (e, t) in r.iter_mut().enumerate() {
                *t = cfg.rx_time(x, z, e);
            }
        });
        let rx_phase = rx.iter().map(|&t| Fc::from_polar(1.0, w0 * t)).collect();
        Ok(Self {
            cfg: cfg.clone(),
            grid: *grid,
            opts: *opts,
            rx,
            rx_phase,
        })
    }

    pub fn grid(&self) -> &BeamformGrid {
        &self.grid
    }

    fn run(&self, chs: &Channels, tilt_deg: f64, rotate: bool) -> Result<Vec<Fc<f64>>> {
        let ne = self.cfg.element_count;
        if chs.rows.len() != ne {
            return Err(Error::Dimension(format!(
                "{} channels for a {ne}-element probe",
                chs.rows.len()
            )));
        }
        let (grid, cfg) = (&self.grid, &self.cfg);
        let w0 = 2.0 * std::f64::consts::PI * cfg.f0;
        let mut out = vec![Fc::new(0.0, 0.0); grid.depth_samples * grid.angle_lines];
        out.par_chunks_mut(grid.angle_lines)
            .enumerate()
            .for_each(|(row, line)| {
                for (col, px) in line.iter_mut().enumerate() {
                    let p = row * grid.angle_lines + col;
                    let (x, z) = grid.position(row, col);
                    let t_tx = cfg.tx_time(x, z, tilt_deg);
                    let rx = &self.rx[p * ne..(p + 1) * ne];
                    let mut acc = Fc::new(0.0, 0.0);
                    if rotate {
                        let ph = &self.rx_phase[p * ne..(p + 1) * ne];
                        for (e, (&r, &w)) in rx.iter().zip(ph).enumerate() {
                            acc += chs.at(e, t_tx + r) * w;
                        }
                        acc *= Fc::from_polar(1.0, w0 * t_tx);
                    } else {
                        for (e, &r) in rx.iter().enumerate() {
                            acc += chs.at(e, t_tx + r);
                        }
                    }
                    *px = acc;
                }
            });
        Ok(out)
    }

    /// Beamform RF channels (no apodization).
    pub fn rf(&self, ch: &ChannelData, tilt_deg: f64) -> Result<BeamformedImage> {
        let v = self.run(&Channels::from_rf(ch, &self.opts), tilt_deg, false)?;
        let data = v.iter().map(|c| c.re).collect();
        Ok(BeamformedImage {
            pixels: Signal::Real(RealTensor::from_vec(self.grid.shape(), data)?),
            grid: self.grid,
            tilt_deg: Some(tilt_deg),
        })
    }

    /// Beamform baseband channels; each delayed sample is rotated by
    /// `exp(+j2π f0 τ)` to restore the carrier phase before summation.
    pub fn iq(&self, ch: &IqChannelData, tilt_deg: f64) -> Result<BeamformedImage> {
        let v = self.run(&Channels::from_iq(ch, &self.opts), tilt_deg, true)?;
        let re: Vec<f64> = v.iter().map(|c| c.re).collect();
        let im: Vec<f64> = v.iter().map(|c| c.im).collect();
        Ok(BeamformedImage {
            pixels: Signal::Complex(ComplexTensor::from_parts(self.grid.shape(), &re, &im)?),
            grid: self.grid,
            tilt_deg: Some(tilt_deg),
        })
    }
}

/// Delay-and-sum of RF channels (no apodization).
pub fn das_rf(
    ch: &ChannelData,
    cfg: &AcquisitionConfig,
    grid: &BeamformGrid,
    tilt_deg: f64,
) -> Result<BeamformedImage> {
    das_rf_with(ch, cfg, grid, tilt_deg, &DasOptions::default())
}

pub fn das_rf_with(
    ch: &ChannelData,
    cfg: &AcquisitionConfig,
    grid: &BeamformGrid,
    tilt_deg: f64,
    opts: &DasOptions,
) -> Result<BeamformedImage> {
    Beamformer::new(cfg, grid, opts)?.rf(ch, tilt_deg)
}

/// Delay-and-sum of baseband channels with carrier phase restoration.
pub fn das_iq(
    ch: &IqChannelData,
    cfg: &AcquisitionConfig,
    grid: &BeamformGrid,
    tilt_deg: f64,
) -> Result<BeamformedImage> {
    das_iq_with(ch, cfg, grid, tilt_deg, &DasOptions::default())
}

pub fn das_iq_with(
    ch: &IqChannelData,
    cfg: &AcquisitionConfig,
    grid: &BeamformGrid,
    tilt_deg: f64,
    opts: &DasOptions,
) -> Result<BeamformedImage> {
    Beamformer::new(cfg, grid, opts)?.iq(ch, tilt_deg)
}

/// Coherent compounding: pixelwise mean of same-kind images on one grid.
/// Each pixel is summed in ascending value order, so the result does not
/// depend on the order of `images`.
pub fn compound(images: &[BeamformedImage]) -> Result<BeamformedImage> {
    let first = images
        .first()
        .ok_or_else(|| Error::Dimension("cannot compound zero images".into()))?;
    for img in &images[1..] {
        if img.grid != first.grid
            || img.kind() != first.kind()
            || img.pixels.shape() != first.pixels.shape()
        {
            return Err(Error::Dimension(
                "compounded images must share grid and kind".into(),
            ));
        }
    }
    let k = 1.0 / images.len() as f64;
    let mut column = vec![0.0; images.len()];
    let acc = (0..first.pixels.values().len())
        .map(|i| {
            for (c, img) in column.iter_mut().zip(images) {
                *c = img.pixels.values()[i];
            }
            column.sort_unstable_by(f64::total_cmp);
            column.iter().sum::<f64>() * k
        })
        .collect();
    Ok(BeamformedImage {
        pixels: first.pixels.with_values(first.pixels.shape(), acc)?,
        grid: first.grid,
        tilt_deg: None,
    })
}

/// Linear resampling of a single-channel image along depth onto another grid
/// with the same angle lines.
pub fn resample_depth(
    img: &RealTensor,
    from: &BeamformGrid,
    to: &BeamformGrid,
) -> Result<RealTensor> {
    if from.angle_lines != to.angle_lines || from.sector_deg != to.sector_deg {
        return Err(Error::Dimension("grids differ in their angle lines".into()));
    }
    from.shape().ensure_eq(&img.shape())?;
    Ok(RealTensor::from_fn(to.shape(), |_, row, col| {
        let u = (to.depth(row) - from.depth_min) / from.axial_spacing();
        if u <= 0.0 {
            return img.get(0, 0, col);
        }
        let i = u.floor() as usize;
        if i + 1 >= from.depth_samples {
            return img.get(0, from.depth_samples - 1, col);
        }
        let f = u - i as f64;
        img.get(0, i, col) * (1.0 - f) + img.get(0, i + 1, col) * f
    }))
}

/// Rotate every pixel of a complex image by `exp(jφ)`.
pub fn rotate_phase(img: &ComplexTensor, phi: f64) -> ComplexTensor {
    img.scale(Complex::cis(phi))
}
