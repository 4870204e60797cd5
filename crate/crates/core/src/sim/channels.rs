//! Per-element RF channel synthesis.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{read_record, write_record, RecordKind};
use crate::nn::Signal;
use crate::sim::{AcquisitionConfig, PhantomScene, Pulse};
use crate::tensor::{ComplexTensor, RealTensor, Shape};

/// RF samples of every element for one transmit, `[1 × elements × samples]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelData {
    pub samples: RealTensor,
    pub fs: f64,
    /// Time of the first sample relative to the transmit origin (s).
    pub t0: f64,
}

/// Complex baseband counterpart of [`ChannelData`].
#[derive(Debug, Clone, PartialEq)]
pub struct IqChannelData {
    pub samples: ComplexTensor,
    pub fs: f64,
    pub t0: f64,
}

impl ChannelData {
    pub fn elements(&self) -> usize {
        self.samples.shape().height
    }

    pub fn len(&self) -> usize {
        self.samples.shape().width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_record(
            path,
            RecordKind::RfChannels,
            &Signal::Real(self.samples.clone()),
            self.fs,
            self.t0,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = read_record(path)?;
        match (r.kind, r.data) {
            (RecordKind::RfChannels, Signal::Real(samples)) => Ok(Self {
                samples,
                fs: r.a,
                t0: r.b,
            }),
            (k, _) => Err(Error::Config(format!(
                "expected RF channel data, found {k:?}"
            ))),
        }
    }
}

impl IqChannelData {
    pub fn elements(&self) -> usize {
        self.samples.shape().height
    }

    pub fn len(&self) -> usize {
        self.samples.shape().width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_record(
            path,
            RecordKind::IqChannels,
            &Signal::Complex(self.samples.clone()),
            self.fs,
            self.t0,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = read_record(path)?;
        match (r.kind, r.data) {
            (RecordKind::IqChannels, Signal::Complex(samples)) => Ok(Self {
                samples,
                fs: r.a,
                t0: r.b,
            }),
            (k, _) => Err(Error::Config(format!(
                "expected I/Q channel data, found {k:?}"
            ))),
        }
    }
}

/// Reusable simulator for one scene: receive times do not depend on the
/// tilt, so they are computed once and shared by every transmit.
pub struct ChannelSimulator<'a> {
    cfg: &'a AcquisitionConfig,
    pulse: Pulse,
    /// Scatterers kept (inside the depth window).
    kept: Vec<(f64, f64, f64)>,
    /// Receive time per element per kept scatterer, element-major.
    rx: Vec<f64>,
    ignored: usize,
}

/// Receive-side reference distance for the optional 1/r spreading.
const SPREADING_REF: f64 = 10e-3;

impl<'a> ChannelSimulator<'a> {
    pub fn new(cfg: &'a AcquisitionConfig, scene: &PhantomScene) -> Result<Self> {
        cfg.validate()?;
        scene.validate()?;
        let mut kept = Vec::with_capacity(scene.scatterers.len());
        let mut ignored = 0;
        for s in &scene.scatterers {
            if s.z < 0.0 || s.x.hypot(s.z) > cfg.max_depth {
                ignored += 1;
            } else {
                kept.push((s.x, s.z, s.amplitude));
            }
        }
        // range order keeps echo binning cache-local
        kept.sort_by(|a, b| a.0.hypot(a.1).total_cmp(&b.0.hypot(b.1)));
        if ignored > 0 {
            log::warn!(
                "{ignored} scatterers outside the {} m depth window ignored",
                cfg.max_depth
            );
        }
        let n = kept.len();
        let mut rx = vec![0.0; cfg.element_count * n];
        rx.par_chunks_mut(n.max(1))
            .enumerate()
            .for_each(|(e, row)| {
                for (t, &(x, z, _)) in row.iter_mut().zip(&kept) {
                    *t = cfg.rx_time(x, z, e);
                }
            });
        Ok(Self {
            cfg,
            pulse: cfg.pulse(),
            kept,
            rx,
            ignored,
        })
    }

    /// Number of scatterers dropped for lying outside the depth window.
    pub fn ignored(&self) -> usize {
        self.ignored
    }

    pub fn simulate(&self, tilt_deg: f64) -> ChannelData {
        let cfg = self.cfg;
        let n = self.kept.len();
        let len = cfg.rf_samples();
        let tx: Vec<f64> = self
            .kept
            .iter()
            .map(|&(x, z, _)| cfg.tx_time(x, z, tilt_deg))
            .collect();
        let mut data = vec![0.0; cfg.element_count * len];
        data.par_chunks_mut(len).enumerate().for_each(|(e, row)| {
            let rx = &self.rx[e * n..(e + 1) * n];
            let echoes = (0..n).map(|i| {
                let mut amp = self.kept[i].2;
                if cfg.spreading {
                    amp *= SPREADING_REF / (rx[i] * cfg.c);
                }
                (tx[i] + rx[i], amp)
            });
            self.pulse.render(row, 0.0, echoes);
        });
        ChannelData {
            samples: RealTensor::from_vec(Shape::new(1, cfg.element_count, len), data)
                .expect("buffer matches shape"),
            fs: cfg.fs_rf,
            t0: 0.0,
        }
    }
}

/// Add white Gaussian noise of the given RMS to every sample.
pub fn add_noise<R: Rng + ?Sized>(ch: &mut ChannelData, rms: f64, rng: &mut R) {
    if rms > 0.0 {
        for v in ch.samples.data_mut() {
            *v += rms * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

/// Simulate one transmit of `scene` at `tilt_deg`.
pub fn simulate_channels(
    cfg: &AcquisitionConfig,
    scene: &PhantomScene,
    tilt_deg: f64,
) -> Result<ChannelData> {
    Ok(ChannelSimulator::new(cfg, scene)?.simulate(tilt_deg))
}
