//! Envelope detection and log compression.

use rustfft::num_complex::Complex as Fc;
use rustfft::FftPlanner;

use crate::beamform::BeamformedImage;
use crate::nn::Signal;
use crate::tensor::RealTensor;

/// Magnitude of the analytic signal along the depth axis of every column
/// (FFT-based discrete Hilbert transform).
pub fn hilbert_envelope(rf: &RealTensor) -> RealTensor {
    let s = rf.shape();
    let n = s.height;
    let mut out = RealTensor::zeros(s);
    if n == 0 {
        return out;
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut h = vec![0.0; n];
    h[0] = 1.0;
    for v in h.iter_mut().take(n.div_ceil(2)).skip(1) {
        *v = 2.0;
    }
    if n.is_multiple_of(2) {
        h[n / 2] = 1.0;
    }
    let mut buf = vec![Fc::new(0.0, 0.0); n];
    for c in 0..s.channels {
        for col in 0..s.width {
            for (row, b) in buf.iter_mut().enumerate() {
                *b = Fc::new(rf.get(c, row, col), 0.0);
            }
            fwd.process(&mut buf);
            for (b, g) in buf.iter_mut().zip(&h) {
                *b *= *g;
            }
            inv.process(&mut buf);
            for (row, b) in buf.iter().enumerate() {
                out.set(c, row, col, b.norm() / n as f64);
            }
        }
    }
    out
}

/// Envelope of a beamformed image: modulus for I/Q, Hilbert envelope for RF.
pub fn envelope(img: &BeamformedImage) -> RealTensor {
    match &img.pixels {
        Signal::Complex(z) => z.amplitude(),
        Signal::Real(r) => hilbert_envelope(r),
    }
}

/// Envelope scaled to a maximum of 1 (all-zero images stay zero).
pub fn normalized_envelope(env: &RealTensor) -> RealTensor {
    let m = env.max();
    if m > 0.0 {
        env.scale(1.0 / m)
    } else {
        RealTensor::zeros(env.shape())
    }
}

/// Log-compress an envelope to `[0, 1]` over `dynamic_range_db`.
pub fn bmode(env: &RealTensor, dynamic_range_db: f64) -> RealTensor {
    let m = env.max();
    if !(m > 0.0) {
        return RealTensor::zeros(env.shape());
    }
    let data = env
        .data()
        .iter()
        .map(|&v| {
            let db = if v > 0.0 {
                20.0 * (v / m).log10()
            } else {
                f64::NEG_INFINITY
            };
            (db.max(-dynamic_range_db) + dynamic_range_db) / dynamic_range_db
        })
        .collect();
    RealTensor::from_vec(env.shape(), data).expect("same shape")
}

pub fn envelope_bmode(img: &BeamformedImage, dynamic_range_db: f64) -> RealTensor {
    bmode(&envelope(img), dynamic_range_db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn bmode_levels() {
        let env =
            RealTensor::from_vec(Shape::new(1, 1, 5), vec![2.0, 0.2, 0.002, 0.0, 1e-9]).unwrap();
        let b = bmode(&env, 60.0);
        assert_eq!(b.data()[0], 1.0);
        assert!((b.data()[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!(b.data()[2].abs() < 1e-12);
        assert_eq!(b.data()[3], 0.0);
        assert_eq!(b.data()[4], 0.0);
        assert!(bmode(&RealTensor::zeros(Shape::new(1, 2, 2)), 60.0)
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn hilbert_envelope_of_modulated_gaussian() {
        let n = 512;
        let env_true = |i: usize| (-((i as f64 - 256.0) / 30.0).powi(2)).exp();
        let rf = RealTensor::from_fn(Shape::new(1, n, 1), |_, i, _| {
            env_true(i) * (0.9 * i as f64).cos()
        });
        let e = hilbert_envelope(&rf);
        for i in 150..360 {
            assert!((e.get(0, i, 0) - env_true(i)).abs() < 1e-6);
        }
    }
}
