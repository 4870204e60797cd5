//! Real and complex convolution layers.
//!
//! A complex layer `W = W_re + jW_im` applied to `X = X_re + jX_im` produces
//! `(W_re ∗ X_re − W_im ∗ X_im) + j(W_re ∗ X_im + W_im ∗ X_re)`. It is computed as
//! a single real convolution of the stacked input `[X_re; X_im]` with the block
//! kernel `[[W_re, −W_im], [W_im, W_re]]`, whose output is the stacked
//! `[Z_re; Z_im]` planes.

use crate::error::{Error, Result};
use crate::nn::engine::{self, Geometry};
use crate::tensor::{ComplexTensor, RealTensor, Shape};

/// Real convolution layer: `out_channels` kernels of `in_channels × kh × kw`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealConvLayer {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: (usize, usize),
    /// `[out, in, kh, kw]`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl RealConvLayer {
    pub fn zeros(out_channels: usize, in_channels: usize, kernel: (usize, usize)) -> Self {
        Self {
            out_channels,
            in_channels,
            kernel,
            weight: vec![0.0; out_channels * in_channels * kernel.0 * kernel.1],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn geometry(&self, shape: Shape) -> Result<Geometry> {
        if shape.channels != self.in_channels {
            return Err(Error::Dimension(format!(
                "layer expects {} input channels, got {}",
                self.in_channels, shape.channels
            )));
        }
        Ok(Geometry {
            c: self.in_channels,
            h: shape.height,
            w: shape.width,
            o: self.out_channels,
            kh: self.kernel.0,
            kw: self.kernel.1,
        })
    }
}

/// Complex convolution layer with one complex bias per kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexConvLayer {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: (usize, usize),
    pub w_re: Vec<f64>,
    pub w_im: Vec<f64>,
    pub b_re: Vec<f64>,
    pub b_im: Vec<f64>,
}

impl ComplexConvLayer {
    pub fn zeros(out_channels: usize, in_channels: usize, kernel: (usize, usize)) -> Self {
        let n = out_channels * in_channels * kernel.0 * kernel.1;
        Self {
            out_channels,
            in_channels,
            kernel,
            w_re: vec![0.0; n],
            w_im: vec![0.0; n],
            b_re: vec![0.0; out_channels],
            b_im: vec![0.0; out_channels],
        }
    }

    /// Number of real scalars (both planes, biases included).
    pub fn param_count(&self) -> usize {
        self.w_re.len() + self.w_im.len() + self.b_re.len() + self.b_im.len()
    }

    /// The equivalent real layer acting on stacked `[re; im]` planes.
    pub fn block_layer(&self) -> RealConvLayer {
        let (o, c) = (self.out_channels, self.in_channels);
        let kk = self.kernel.0 * self.kernel.1;
        let mut blk = RealConvLayer::zeros(2 * o, 2 * c, self.kernel);
        for oi in 0..o {
            for ci in 0..c {
                let src = (oi * c + ci) * kk;
                let wr = &self.w_re[src..src + kk];
                let wi = &self.w_im[src..src + kk];
                let at = |row: usize, col: usize| (row * 2 * c + col) * kk;
                let (tl, tr) = (at(oi, ci), at(oi, c + ci));
                let (bl, br) = (at(o + oi, ci), at(o + oi, c + ci));
                blk.weight[tl..tl + kk].copy_from_slice(wr);
                for (d, s) in blk.weight[tr..tr + kk].iter_mut().zip(wi) {
                    *d = -s;
                }
                blk.weight[bl..bl + kk].copy_from_slice(wi);
                blk.weight[br..br + kk].copy_from_slice(wr);
            }
        }
        blk.bias[..o].copy_from_slice(&self.b_re);
        blk.bias[o..].copy_from_slice(&self.b_im);
        blk
    }
}

/// Same-padded real convolution.
pub fn conv2d(x: &RealTensor, layer: &RealConvLayer) -> Result<RealTensor> {
    let g = layer.geometry(x.shape())?;
    let mut out = RealTensor::zeros(x.shape().with_channels(layer.out_channels));
    engine::forward(x.data(), &g, &layer.weight, &layer.bias, out.data_mut());
    Ok(out)
}

/// Same-padded complex convolution (four real convolutions plus complex bias).
pub fn complex_conv2d(x: &ComplexTensor, layer: &ComplexConvLayer) -> Result<ComplexTensor> {
    if x.shape().channels != layer.in_channels {
        return Err(Error::Dimension(format!(
            "layer expects {} input channels, got {}",
            layer.in_channels,
            x.shape().channels
        )));
    }
    let blk = layer.block_layer();
    let g = blk.geometry(x.shape().with_channels(2 * layer.in_channels))?;
    let shape = x.shape().with_channels(layer.out_channels);
    let mut planes = vec![0.0; 2 * shape.len()];
    engine::forward(x.planes(), &g, &blk.weight, &blk.bias, &mut planes);
    ComplexTensor::from_planes(shape, planes)
}

/// Gradients of a real layer, in parameter order (weight, bias).
pub(crate) fn conv2d_backward(
    x: &RealTensor,
    layer: &RealConvLayer,
    dout: &RealTensor,
    grad: &mut [f64],
    need_dx: bool,
) -> Result<Option<RealTensor>> {
    let g = layer.geometry(x.shape())?;
    let (dw, db) = grad.split_at_mut(layer.weight.len());
    let mut dx = need_dx.then(|| RealTensor::zeros(x.shape()));
    engine::backward(
        x.data(),
        &g,
        &layer.weight,
        dout.data(),
        dw,
        db,
        dx.as_mut().map(|t| t.data_mut()),
    );
    Ok(dx)
}

/// Gradients of a complex layer with respect to the real and imaginary parts of
/// every parameter, accumulated into `grad` laid out as `[w_re | w_im | b_re | b_im]`.
pub(crate) fn complex_conv2d_backward(
    x: &ComplexTensor,
    layer: &ComplexConvLayer,
    dout: &ComplexTensor,
    grad: &mut [f64],
    need_dx: bool,
) -> Result<Option<ComplexTensor>> {
    let blk = layer.block_layer();
    let g = blk.geometry(x.shape().with_channels(2 * layer.in_channels))?;
    let mut dblk = vec![0.0; blk.weight.len()];
    let mut dbias = vec![0.0; blk.bias.len()];
    let mut dx = need_dx.then(|| vec![0.0; x.planes().len()]);
    engine::backward(
        x.planes(),
        &g,
        &blk.weight,
        dout.planes(),
        &mut dblk,
        &mut dbias,
        dx.as_deref_mut(),
    );

    let (o, c) = (layer.out_channels, layer.in_channels);
    let kk = layer.kernel.0 * layer.kernel.1;
    let n = layer.w_re.len();
    let (gw, gb) = grad.split_at_mut(2 * n);
    let (gwr, gwi) = gw.split_at_mut(n);
    for oi in 0..o {
        for ci in 0..c {
            let dst = (oi * c + ci) * kk;
            let at = |row: usize, col: usize| (row * 2 * c + col) * kk;
            let (tl, tr) = (at(oi, ci), at(oi, c + ci));
            let (bl, br) = (at(o + oi, ci), at(o + oi, c + ci));
            for k in 0..kk {
                gwr[dst + k] += dblk[tl + k] + dblk[br + k];
                gwi[dst + k] += dblk[bl + k] - dblk[tr + k];
            }
        }
    }
    let (gbr, gbi) = gb.split_at_mut(o);
    for oi in 0..o {
        gbr[oi] += dbias[oi];
        gbi[oi] += dbias[o + oi];
    }
    dx.map(|planes| ComplexTensor::from_planes(x.shape(), planes))
        .transpose()
}
