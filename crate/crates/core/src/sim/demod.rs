//! Downmixing, Butterworth low-pass filtering and decimation.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::sim::{AcquisitionConfig, ChannelData, IqChannelData};
use crate::tensor::{ComplexTensor, Shape};

/// Second-order section, `b0 + b1 z⁻¹ + b2 z⁻²` over `1 + a1 z⁻¹ + a2 z⁻²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Gain at z = 1.
    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Complex response at normalized angular frequency `w` (rad/sample).
    pub fn response(&self, w: f64) -> (f64, f64) {
        let z1 = (w.cos(), -w.sin());
        let z2 = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (
            self.b[0] + self.b[1] * z1.0 + self.b[2] * z2.0,
            self.b[1] * z1.1 + self.b[2] * z2.1,
        );
        let den = (
            1.0 + self.a[0] * z1.0 + self.a[1] * z2.0,
            self.a[0] * z1.1 + self.a[1] * z2.1,
        );
        let d = den.0 * den.0 + den.1 * den.1;
        (
            (num.0 * den.0 + num.1 * den.1) / d,
            (num.1 * den.0 - num.0 * den.1) / d,
        )
    }

    /// Transposed direct form II state reached after a long run of unit input.
    fn unit_steady_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        [g - self.b[0], self.b[2] - self.a[1] * g]
    }
}

/// Digital Butterworth low-pass of the given order via the bilinear
/// transform with frequency prewarping.
pub fn butterworth_lowpass(order: usize, cutoff: f64, fs: f64) -> Vec<Biquad> {
    let k = 2.0 * fs;
    let wc = k * (PI * cutoff / fs).tan();
    let mut sos = Vec::with_capacity(order.div_ceil(2));
    for i in 0..order / 2 {
        // analog pole pair at wc·exp(±jθ), θ in the left half-plane
        let theta = PI * (2 * i + 1 + order) as f64 / (2 * order) as f64;
        let alpha = -2.0 * theta.cos() * wc;
        let a0 = k * k + alpha * k + wc * wc;
        sos.push(Biquad {
            b: [wc * wc / a0, 2.0 * wc * wc / a0, wc * wc / a0],
            a: [
                (2.0 * wc * wc - 2.0 * k * k) / a0,
                (k * k - alpha * k + wc * wc) / a0,
            ],
        });
    }
    if order % 2 == 1 {
        let a0 = k + wc;
        sos.push(Biquad {
            b: [wc / a0, wc / a0, 0.0],
            a: [(wc - k) / a0, 0.0],
        });
    }
    sos
}

/// Filter `x` in place through the cascade, starting from the given states.
fn sosfilt_with(sos: &[Biquad], x: &mut [f64], states: &mut [[f64; 2]]) {
    for (s, z) in sos.iter().zip(states.iter_mut()) {
        for v in x.iter_mut() {
            let y = s.b[0] * *v + z[0];
            z[0] = s.b[1] * *v - s.a[0] * y + z[1];
            z[1] = s.b[2] * *v - s.a[1] * y;
            *v = y;
        }
    }
}

/// Causal cascade filtering from rest.
pub fn sosfilt(sos: &[Biquad], x: &mut [f64]) {
    let mut states = vec![[0.0; 2]; sos.len()];
    sosfilt_with(sos, x, &mut states);
}

/// Initial states matching a constant input `x0`.
fn steady_states(sos: &[Biquad], x0: f64) -> Vec<[f64; 2]> {
    let mut scale = x0;
    sos.iter()
        .map(|s| {
            let u = s.unit_steady_state();
            let z = [u[0] * scale, u[1] * scale];
            scale *= s.dc_gain();
            z
        })
        .collect()
}

/// Zero-phase forward-backward filtering with odd-symmetric end extension
/// and steady-state initial conditions.
pub fn sosfiltfilt(sos: &[Biquad], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = (3 * (2 * sos.len() + 1)).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }

    let mut st = steady_states(sos, ext[0]);
    sosfilt_with(sos, &mut ext, &mut st);
    ext.reverse();
    let mut st = steady_states(sos, ext[0]);
    sosfilt_with(sos, &mut ext, &mut st);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Downmix by `exp(−j2π f0 t)`, low-pass both quadratures with the configured
/// Butterworth filter run forward and backward, then keep every
/// `fs_rf / fs_iq`-th sample.
pub fn demodulate(rf: &ChannelData, cfg: &AcquisitionConfig) -> IqChannelData {
    let sos = butterworth_lowpass(cfg.lpf_order, cfg.lpf_cutoff, rf.fs);
    let dec = cfg.decimation();
    let (elements, len) = (rf.elements(), rf.len());
    let out_len = len.div_ceil(dec);
    let w = 2.0 * PI * cfg.f0 / rf.fs;
    let phase0 = 2.0 * PI * cfg.f0 * rf.t0;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = rf
        .samples
        .channel(0)
        .par_chunks(len.max(1))
        .take(elements)
        .map(|row| {
            let mut re = Vec::with_capacity(len);
            let mut im = Vec::with_capacity(len);
            for (n, v) in row.iter().enumerate() {
                let ph = phase0 + w * n as f64;
                re.push(v * ph.cos());
                im.push(-v * ph.sin());
            }
            let re = sosfiltfilt(&sos, &re);
            let im = sosfiltfilt(&sos, &im);
            (
                re.iter().step_by(dec).copied().collect(),
                im.iter().step_by(dec).copied().collect(),
            )
        })
        .collect();
    let mut re = Vec::with_capacity(elements * out_len);
    let mut im = Vec::with_capacity(elements * out_len);
    for (r, i) in rows {
        re.extend(r);
        im.extend(i);
    }
    IqChannelData {
        samples: ComplexTensor::from_parts(Shape::new(1, elements, out_len), &re, &im)
            .expect("buffer matches shape"),
        fs: rf.fs / dec as f64,
        t0: rf.t0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::RealTensor;

    fn magnitude(sos: &[Biquad], f: f64, fs: f64) -> f64 {
        sos.iter()
            .map(|s| {
                let (r, i) = s.response(2.0 * PI * f / fs);
                r.hypot(i)
            })
            .product()
    }

    #[test]
    fn butterworth_response() {
        let sos = butterworth_lowpass(10, 1.6e6, 12e6);
        assert_eq!(sos.len(), 5);
        assert!((magnitude(&sos, 0.0, 12e6) - 1.0).abs() < 1e-12);
        assert!((magnitude(&sos, 1.6e6, 12e6) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        // prewarped analog prototype evaluated at the mapped frequency
        let ratio = (PI * 2.0 / 12.0).tan() / (PI * 1.6 / 12.0).tan();
        let expect = 1.0 / (1.0 + ratio.powi(20)).sqrt();
        assert!((magnitude(&sos, 2.0e6, 12e6) - expect).abs() < 1e-9);
    }

    #[test]
    fn odd_order_has_a_first_order_section() {
        let sos = butterworth_lowpass(3, 1e3, 1e4);
        assert_eq!(sos.len(), 2);
        assert!((magnitude(&sos, 1e3, 1e4) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn filtfilt_passes_constants_unchanged() {
        let sos = butterworth_lowpass(10, 1.6e6, 12e6);
        let y = sosfiltfilt(&sos, &vec![2.5; 300]);
        assert!(y.iter().all(|v| (v - 2.5).abs() < 1e-9));
    }

    #[test]
    fn pure_tone_downmixes_to_one_half() {
        let cfg = AcquisitionConfig::default();
        let n = 1200;
        let data: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * cfg.f0 * i as f64 / cfg.fs_rf).cos())
            .collect();
        let rf = ChannelData {
            samples: RealTensor::from_vec(Shape::new(1, 1, n), data).unwrap(),
            fs: cfg.fs_rf,
            t0: 0.0,
        };
        let iq = demodulate(&rf, &cfg);
        assert_eq!(iq.len(), 400);
        for i in 50..350 {
            let (re, im) = (iq.samples.re()[i], iq.samples.im()[i]);
            assert!(
                (re - 0.5).abs() < 0.005 && im.abs() < 0.005,
                "{i}: {re} {im}"
            );
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let cfg = AcquisitionConfig::default();
        let rf = ChannelData {
            samples: RealTensor::zeros(Shape::new(1, 4, 90)),
            fs: cfg.fs_rf,
            t0: 0.0,
        };
        let iq = demodulate(&rf, &cfg);
        assert!(iq.samples.planes().iter().all(|&v| v == 0.0));
        assert_eq!(iq.samples.shape(), Shape::new(1, 4, 30));
    }
}
