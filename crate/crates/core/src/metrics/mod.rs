//! Image-quality measures on normalized envelope images.
//!
//! Every measure takes an [`Envelope`], an envelope scaled into `[0, 1]`
//! without log compression.

mod contrast;
mod report;
mod resolution;

use crate::beamform::{envelope, BeamformedImage};
use crate::error::{Error, Result};
use crate::tensor::RealTensor;

pub use contrast::{cnr, cr, gcnr, gcnr_with_edges, RegionMask};
pub use report::{
    evaluate_image, format_table, ContrastMetrics, ImageMetrics, MetricsReport, Summary,
};
pub use resolution::{fwhm_samples, lateral_resolution_fwhm};

/// Default histogram resolution for mutual information and gCNR.
pub const HISTOGRAM_BINS: usize = 256;

/// Envelope image with every pixel in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope(RealTensor);

impl Envelope {
    /// Wrap an envelope that is already normalized.
    pub fn new(t: RealTensor) -> Result<Self> {
        if t.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config("envelope values must lie in [0, 1]".into()));
        }
        Ok(Self(t))
    }

    /// Divide by the maximum pixel. All-zero input stays zero.
    pub fn normalized(env: &RealTensor) -> Result<Self> {
        if !env.is_finite() || env.data().iter().any(|&v| v < 0.0) {
            return Err(Error::Config(
                "envelope must be finite and non-negative".into(),
            ));
        }
        let m = env.max();
        let t = if m > 0.0 {
            env.scale(1.0 / m)
        } else {
            RealTensor::zeros(env.shape())
        };
        // rounding can leave a value a hair above one
        let data = t.data().iter().map(|v| v.min(1.0)).collect();
        Self::new(RealTensor::from_vec(env.shape(), data)?)
    }

    /// Envelope detection followed by max normalization.
    pub fn from_image(img: &BeamformedImage) -> Result<Self> {
        Self::normalized(&envelope(img))
    }

    pub fn tensor(&self) -> &RealTensor {
        &self.0
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }
}

fn same_shape(a: &Envelope, b: &Envelope) -> Result<()> {
    if a.0.shape() != b.0.shape() {
        return Err(Error::Dimension(format!(
            "image shapes differ: {} vs {}",
            a.0.shape(),
            b.0.shape()
        )));
    }
    if a.data().is_empty() {
        return Err(Error::Dimension("empty image".into()));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB against the reference maximum.
/// Identical images give `+∞`.
pub fn psnr(yhat: &Envelope, y: &Envelope) -> Result<f64> {
    same_shape(yhat, y)?;
    let n = y.data().len() as f64;
    let mse = yhat
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (y.0.max() / mse.sqrt()).log10())
}

/// How SSIM statistics are gathered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SsimWindow {
    /// One window covering the whole image.
    #[default]
    Global,
    /// Mean over 11 × 11 Gaussian windows (σ = 1.5 px) fully inside the image.
    Gaussian,
}

/// Global structural similarity with data range 1.
pub fn ssim(yhat: &Envelope, y: &Envelope) -> Result<f64> {
    ssim_with(yhat, y, SsimWindow::Global, 1.0)
}

pub fn ssim_with(
    yhat: &Envelope,
    y: &Envelope,
    window: SsimWindow,
    data_range: f64,
) -> Result<f64> {
    same_shape(yhat, y)?;
    if !(data_range > 0.0) {
        return Err(Error::Config("SSIM data range must be positive".into()));
    }
    let c1 = (0.01 * data_range).powi(2);
    let c2 = (0.03 * data_range).powi(2);
    let index = |mx: f64, my: f64, vx: f64, vy: f64, cxy: f64| {
        ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    };
    match window {
        SsimWindow::Global => {
            let (a, b) = (yhat.data(), y.data());
            let n = a.len() as f64;
            let ma = a.iter().sum::<f64>() / n;
            let mb = b.iter().sum::<f64>() / n;
            let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
            for (x, y) in a.iter().zip(b) {
                va += (x - ma) * (x - ma);
                vb += (y - mb) * (y - mb);
                cab += (x - ma) * (y - mb);
            }
            Ok(index(ma, mb, va / n, vb / n, cab / n))
        }
        SsimWindow::Gaussian => gaussian_ssim(yhat, y, index),
    }
}

fn gaussian_ssim(
    yhat: &Envelope,
    y: &Envelope,
    index: impl Fn(f64, f64, f64, f64, f64) -> f64,
) -> Result<f64> {
    const SIZE: usize = 11;
    const SIGMA: f64 = 1.5;
    let s = y.0.shape();
    if s.height < SIZE || s.width < SIZE {
        return Err(Error::Dimension(format!(
            "windowed SSIM needs at least {SIZE} × {SIZE} pixels"
        )));
    }
    let mut g: Vec<f64> = (0..SIZE)
        .map(|i| {
            let d = i as f64 - (SIZE / 2) as f64;
            (-d * d / (2.0 * SIGMA * SIGMA)).exp()
        })
        .collect();
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= total);

    let (oh, ow) = (s.height - SIZE + 1, s.width - SIZE + 1);
    let blur = |f: &dyn Fn(usize) -> f64, c: usize| {
        // separable valid-mode filtering of one channel
        let mut rows = vec![0.0; s.height * ow];
        for r in 0..s.height {
            for col in 0..ow {
                rows[r * ow + col] = (0..SIZE)
                    .map(|k| g[k] * f(c * s.pixels() + r * s.width + col + k))
                    .sum();
            }
        }
        let mut out = vec![0.0; oh * ow];
        for r in 0..oh {
            for col in 0..ow {
                out[r * ow + col] = (0..SIZE).map(|k| g[k] * rows[(r + k) * ow + col]).sum();
            }
        }
        out
    };
    let (a, b) = (yhat.data(), y.data());
    let mut sum = 0.0;
    for c in 0..s.channels {
        let ma = blur(&|i| a[i], c);
        let mb = blur(&|i| b[i], c);
        let aa = blur(&|i| a[i] * a[i], c);
        let bb = blur(&|i| b[i] * b[i], c);
        let ab = blur(&|i| a[i] * b[i], c);
        for i in 0..oh * ow {
            sum += index(
                ma[i],
                mb[i],
                aa[i] - ma[i] * ma[i],
                bb[i] - mb[i] * mb[i],
                ab[i] - ma[i] * mb[i],
            );
        }
    }
    Ok(sum / (s.channels * oh * ow) as f64)
}

fn bin(v: f64, bins: usize) -> usize {
    ((v * bins as f64) as usize).min(bins - 1)
}

/// Mutual information in nats from a `bins × bins` joint histogram over `[0, 1]²`.
pub fn mutual_information(yhat: &Envelope, y: &Envelope, bins: usize) -> Result<f64> {
    same_shape(yhat, y)?;
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let mut joint = vec![0usize; bins * bins];
    let mut pa = vec![0usize; bins];
    let mut pb = vec![0usize; bins];
    for (&a, &b) in yhat.data().iter().zip(y.data()) {
        let (i, j) = (bin(a, bins), bin(b, bins));
        joint[i * bins + j] += 1;
        pa[i] += 1;
        pb[j] += 1;
    }
    let n = yhat.data().len() as f64;
    let mut mi = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c > 0 {
                let p = c as f64 / n;
                mi += p * (p * n * n / (pa[i] as f64 * pb[j] as f64)).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// Shannon entropy (nats) of the `bins`-cell histogram over `[0, 1]`.
pub fn entropy(x: &Envelope, bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let mut h = vec![0usize; bins];
    for &v in x.data() {
        h[bin(v, bins)] += 1;
    }
    let n = x.data().len() as f64;
    Ok(h.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum())
}
