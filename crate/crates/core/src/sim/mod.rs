//! Synthetic diverging-wave acquisitions with a phased array.

mod channels;
mod demod;
mod phantom;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use channels::{add_noise, simulate_channels, ChannelData, ChannelSimulator, IqChannelData};
pub use demod::{butterworth_lowpass, demodulate, sosfilt, sosfiltfilt, Biquad};
pub use phantom::{random_scene, Disk, PhantomScene, Point, Scatterer, SceneParams};

/// Probe, transmit sequence, sampling and pulse parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub element_count: usize,
    /// Element spacing (m).
    pub pitch: f64,
    /// Centre frequency (Hz).
    pub f0: f64,
    /// RF sampling rate (Hz).
    pub fs_rf: f64,
    /// Baseband sampling rate after decimation (Hz).
    pub fs_iq: f64,
    /// Speed of sound (m/s).
    pub c: f64,
    /// Transmit tilts (degrees).
    pub tilt_angles: Vec<f64>,
    /// Subset of `tilt_angles` fed to the networks.
    pub input_angles: Vec<f64>,
    /// −6 dB fractional bandwidth of the Gaussian pulse.
    pub fractional_bandwidth: f64,
    pub lpf_order: usize,
    /// Low-pass cutoff (Hz).
    pub lpf_cutoff: f64,
    /// Angular width of the insonified sector (degrees); sets the virtual source depth.
    pub sector_deg: f64,
    /// Deepest scatterer simulated (m); also sets the record length.
    pub max_depth: f64,
    /// Scale echoes by `1 cm / r` on receive.
    pub spreading: bool,
    /// RMS of white Gaussian receiver noise added to every RF sample, in
    /// the units of the echo amplitudes. Zero gives noiseless channels.
    pub noise_rms: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            element_count: 64,
            pitch: 0.3e-3,
            f0: 3e6,
            fs_rf: 12e6,
            fs_iq: 4e6,
            c: 1540.0,
            tilt_angles: (0..31).map(|i| -30.0 + 2.0 * i as f64).collect(),
            input_angles: vec![-20.0, 0.0, 20.0],
            fractional_bandwidth: 0.6,
            lpf_order: 10,
            lpf_cutoff: 1.6e6,
            sector_deg: 90.0,
            max_depth: 75e-3,
            spreading: false,
            noise_rms: 0.0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.element_count == 0 || self.pitch <= 0.0 || self.c <= 0.0 || self.f0 <= 0.0 {
            return bad("element count, pitch, sound speed and f0 must be positive".into());
        }
        let ratio = self.fs_rf / self.fs_iq;
        if !(ratio >= 1.0 && (ratio - ratio.round()).abs() < 1e-9) {
            return bad(format!("fs_rf / fs_iq = {ratio} is not an integer"));
        }
        let band_top = self.f0 * (1.0 + self.fractional_bandwidth / 2.0);
        if self.fs_rf <= 2.0 * band_top {
            return bad(format!(
                "fs_rf {} Hz does not exceed twice the band edge {band_top} Hz",
                self.fs_rf
            ));
        }
        if !(self.fractional_bandwidth > 0.0) {
            return bad("fractional bandwidth must be positive".into());
        }
        if self.tilt_angles.is_empty() || self.tilt_angles.iter().any(|t| t.abs() >= 90.0) {
            return bad("tilt angles must be non-empty and within ±90°".into());
        }
        for a in &self.input_angles {
            if !self.tilt_angles.iter().any(|t| (t - a).abs() < 1e-9) {
                return bad(format!("input angle {a}° is not among the transmit tilts"));
            }
        }
        if self.lpf_order == 0 || !(self.lpf_cutoff > 0.0 && self.lpf_cutoff < self.fs_rf / 2.0) {
            return bad("low-pass order must be positive and cutoff below fs_rf/2".into());
        }
        if !(self.noise_rms >= 0.0 && self.noise_rms.is_finite()) {
            return bad("noise RMS must be finite and non-negative".into());
        }
        if !(self.sector_deg > 0.0 && self.sector_deg < 180.0) || self.max_depth <= 0.0 {
            return bad("sector must be in (0°, 180°) and max depth positive".into());
        }
        Ok(())
    }

    pub fn decimation(&self) -> usize {
        (self.fs_rf / self.fs_iq).round() as usize
    }

    pub fn aperture(&self) -> f64 {
        self.element_count as f64 * self.pitch
    }

    /// Lateral position of element `e` (the array lies on z = 0, centred at x = 0).
    pub fn element_x(&self, e: usize) -> f64 {
        (e as f64 - (self.element_count as f64 - 1.0) / 2.0) * self.pitch
    }

    /// Distance of the virtual source behind the array centre.
    pub fn source_distance(&self) -> f64 {
        self.aperture() / 2.0 / (self.sector_deg.to_radians() / 2.0).tan()
    }

    /// Virtual source position `(x, z)` for a tilt in degrees.
    pub fn virtual_source(&self, tilt_deg: f64) -> (f64, f64) {
        let d = self.source_distance();
        let t = tilt_deg.to_radians();
        (-d * t.sin(), -d * t.cos())
    }

    /// Transmit time of flight to `(x, z)`; zero when the wavefront crosses the array centre.
    pub fn tx_time(&self, x: f64, z: f64, tilt_deg: f64) -> f64 {
        let (sx, sz) = self.virtual_source(tilt_deg);
        ((x - sx).hypot(z - sz) - self.source_distance()) / self.c
    }

    pub fn rx_time(&self, x: f64, z: f64, e: usize) -> f64 {
        (x - self.element_x(e)).hypot(z) / self.c
    }

    pub fn pulse(&self) -> Pulse {
        Pulse::gaussian(self.f0, self.fractional_bandwidth, self.fs_rf)
    }

    /// RF samples per channel record.
    pub fn rf_samples(&self) -> usize {
        let t_max =
            (2.0 * self.max_depth + self.aperture() / 2.0) / self.c + self.pulse().half_span;
        (t_max * self.fs_rf).ceil() as usize + 1
    }
}

/// Per-element transmit delays producing a diverging wave from the virtual
/// source of `tilt_deg`; the earliest element fires at 0.
pub fn transmit_delays(cfg: &AcquisitionConfig, tilt_deg: f64) -> Vec<f64> {
    let (sx, sz) = cfg.virtual_source(tilt_deg);
    let dist: Vec<f64> = (0..cfg.element_count)
        .map(|e| (cfg.element_x(e) - sx).hypot(sz))
        .collect();
    let min = dist.iter().copied().fold(f64::INFINITY, f64::min);
    dist.iter().map(|d| (d - min) / cfg.c).collect()
}

/// Gaussian-modulated cosine with a polyphase table for echo synthesis.
///
/// Echo times are binned on a grid of `phases` sub-samples per sample (each
/// echo split linearly between its two neighbouring bins), and the bins are
/// then convolved with the matching polyphase branch of the pulse. This is
/// linear interpolation of the pulse on a `phases · fs` grid.
#[derive(Debug, Clone)]
pub struct Pulse {
    pub f0: f64,
    /// Standard deviation of the Gaussian envelope (s).
    pub sigma: f64,
    /// Support used for synthesis, `±half_span` (s).
    pub half_span: f64,
    pub phases: usize,
    pub fs: f64,
    taps: usize,
    /// `table[q · phases + r] = p(q/fs + r/(phases·fs) − half_span)`.
    table: Vec<f64>,
}

impl Pulse {
    pub const PHASES: usize = 32;

    pub fn gaussian(f0: f64, fractional_bandwidth: f64, fs: f64) -> Pulse {
        // −6 dB full bandwidth B·f0 of a Gaussian spectrum
        let sigma = (2.0 * std::f64::consts::LN_2).sqrt()
            / (std::f64::consts::PI * fractional_bandwidth * f0);
        let half_span = 4.0 * sigma;
        let phases = Self::PHASES;
        let taps = (2.0 * half_span * fs).ceil() as usize + 1;
        let mut p = Pulse {
            f0,
            sigma,
            half_span,
            phases,
            fs,
            taps,
            table: Vec::with_capacity(phases * taps),
        };
        for q in 0..taps {
            for r in 0..phases {
                let t = (q * phases + r) as f64 / (phases as f64 * fs) - half_span;
                let v = if t <= half_span { p.eval(t) } else { 0.0 };
                p.table.push(v);
            }
        }
        p
    }

    /// Exact pulse value at time `t` relative to its centre.
    pub fn eval(&self, t: f64) -> f64 {
        (-t * t / (2.0 * self.sigma * self.sigma)).exp()
            * (2.0 * std::f64::consts::PI * self.f0 * t).cos()
    }

    /// Add `Σ amp · p(n/fs + t_start − t)` over `(t, amp)` echoes to `row`.
    pub fn render(
        &self,
        row: &mut [f64],
        t_start: f64,
        echoes: impl IntoIterator<Item = (f64, f64)>,
    ) {
        const PH: i64 = Pulse::PHASES as i64;
        let (taps, len) = (self.taps, row.len());
        // bin j (offset by `taps`) and phase r hold echoes whose support starts
        // at sub-sample index j·phases − r
        let mut bins = vec![0.0; (len + taps + 1) * Pulse::PHASES];
        let scale = self.fs * Pulse::PHASES as f64;
        let mut add = |k: i64, a: f64| {
            let j = k.div_euclid(PH) + i64::from(k.rem_euclid(PH) != 0);
            let r = j * PH - k;
            let slot = j + taps as i64;
            if slot >= 0 && (slot as usize) < len + taps + 1 {
                bins[slot as usize * Pulse::PHASES + r as usize] += a;
            }
        };
        for (t, amp) in echoes {
            let u = (t - self.half_span - t_start) * scale;
            if !u.is_finite() {
                continue;
            }
            let k = u.floor();
            let f = u - k;
            add(k as i64, amp * (1.0 - f));
            if f > 0.0 {
                add(k as i64 + 1, amp * f);
            }
        }
        for (n, out) in row.iter_mut().enumerate() {
            let mut acc = [0.0; Pulse::PHASES];
            for q in 0..taps {
                // bin index n − q, offset by taps
                let slot = n + taps - q;
                let b = &bins[slot * Pulse::PHASES..(slot + 1) * Pulse::PHASES];
                let g = &self.table[q * Pulse::PHASES..(q + 1) * Pulse::PHASES];
                for ((a, x), y) in acc.iter_mut().zip(b).zip(g) {
                    *a += x * y;
                }
            }
            *out += acc.iter().sum::<f64>();
        }
    }
}
