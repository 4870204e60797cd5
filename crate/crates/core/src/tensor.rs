//! Dense real and complex tensors in channels × height × width layout.
//!
//! Complex tensors are planar: one buffer holding the full real plane followed
//! by the full imaginary plane. Viewed as a real tensor, a complex tensor with
//! `C` channels is exactly the stacked `[re; im]` tensor with `2C` channels,
//! which is what the convolution engine consumes.

use std::fmt;

use crate::error::{Error, Result};

/// Extents of a channels × height × width tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    /// Number of elements per plane.
    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixels per channel.
    pub const fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub const fn with_channels(&self, channels: usize) -> Self {
        Self::new(channels, self.height, self.width)
    }

    pub(crate) fn ensure_eq(&self, other: &Shape) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "shape {self} does not match {other}"
            )))
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// Real-valued tensor (RF data, amplitude maps, envelopes).
#[derive(Debug, Clone, PartialEq)]
pub struct RealTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl RealTensor {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Dimension(format!(
                "{} values supplied for shape {shape}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..shape.channels {
            for y in 0..shape.height {
                for x in 0..shape.width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.shape.height + y) * self.shape.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    /// One channel as a contiguous slice.
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.shape.pixels();
        &self.data[c * n..(c + 1) * n]
    }

    /// Select a contiguous range of channels.
    pub fn channels(&self, range: std::ops::Range<usize>) -> RealTensor {
        let n = self.shape.pixels();
        RealTensor {
            shape: self.shape.with_channels(range.len()),
            data: self.data[range.start * n..range.end * n].to_vec(),
        }
    }

    /// Concatenate tensors along the channel axis.
    pub fn concat(parts: &[RealTensor]) -> Result<RealTensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("cannot concatenate zero tensors".into()))?;
        let (h, w) = (first.shape.height, first.shape.width);
        let mut channels = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.shape.height != h || p.shape.width != w {
                return Err(Error::Dimension(format!(
                    "cannot concatenate {} with {}",
                    first.shape, p.shape
                )));
            }
            channels += p.shape.channels;
            data.extend_from_slice(&p.data);
        }
        Ok(RealTensor {
            shape: Shape::new(channels, h, w),
            data,
        })
    }

    pub fn add(&self, other: &RealTensor) -> Result<RealTensor> {
        self.shape.ensure_eq(&other.shape)?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &RealTensor) -> Result<RealTensor> {
        self.shape.ensure_eq(&other.shape)?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn scale(&self, k: f64) -> RealTensor {
        RealTensor {
            shape: self.shape,
            data: self.data.iter().map(|v| v * k).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn zip_map(&self, other: &RealTensor, f: impl Fn(f64, f64) -> f64) -> RealTensor {
        RealTensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// A complex scalar. Only the handful of operations the crate needs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };
    pub const I: Complex = Complex { re: 0.0, im: 1.0 };

    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    /// exp(j·phase)
    pub fn cis(phase: f64) -> Self {
        let (s, c) = phase.sin_cos();
        Self { re: c, im: s }
    }

    pub fn norm(self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn arg(self) -> f64 {
        self.im.atan2(self.re)
    }
}

impl std::ops::Mul for Complex {
    type Output = Complex;

    fn mul(self, o: Complex) -> Complex {
        Complex {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
}

impl std::ops::Add for Complex {
    type Output = Complex;

    fn add(self, o: Complex) -> Complex {
        Complex {
            re: self.re + o.re,
            im: self.im + o.im,
        }
    }
}

impl std::ops::Sub for Complex {
    type Output = Complex;

    fn sub(self, o: Complex) -> Complex {
        Complex {
            re: self.re - o.re,
            im: self.im - o.im,
        }
    }
}

/// Complex-valued tensor stored as a real plane followed by an imaginary plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    shape: Shape,
    planes: Vec<f64>,
}

impl ComplexTensor {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            planes: vec![0.0; 2 * shape.len()],
        }
    }

    pub fn from_parts(shape: Shape, re: &[f64], im: &[f64]) -> Result<Self> {
        if re.len() != shape.len() || im.len() != shape.len() {
            return Err(Error::Dimension(format!(
                "planes of length {}/{} supplied for shape {shape}",
                re.len(),
                im.len()
            )));
        }
        let mut planes = Vec::with_capacity(2 * shape.len());
        planes.extend_from_slice(re);
        planes.extend_from_slice(im);
        Ok(Self { shape, planes })
    }

    /// Build from the stacked `[re; im]` buffer of length `2 * shape.len()`.
    pub fn from_planes(shape: Shape, planes: Vec<f64>) -> Result<Self> {
        if planes.len() != 2 * shape.len() {
            return Err(Error::Dimension(format!(
                "{} plane values supplied for complex shape {shape}",
                planes.len()
            )));
        }
        Ok(Self { shape, planes })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> Complex) -> Self {
        let n = shape.len();
        let mut planes = vec![0.0; 2 * n];
        let mut i = 0;
        for c in 0..shape.channels {
            for y in 0..shape.height {
                for x in 0..shape.width {
                    let z = f(c, y, x);
                    planes[i] = z.re;
                    planes[n + i] = z.im;
                    i += 1;
                }
            }
        }
        Self { shape, planes }
    }

    /// Promote a real tensor (imaginary plane zero).
    pub fn from_real(re: &RealTensor) -> Self {
        let n = re.shape.len();
        let mut planes = Vec::with_capacity(2 * n);
        planes.extend_from_slice(&re.data);
        planes.resize(2 * n, 0.0);
        Self {
            shape: re.shape,
            planes,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn re(&self) -> &[f64] {
        &self.planes[..self.shape.len()]
    }

    pub fn im(&self) -> &[f64] {
        &self.planes[self.shape.len()..]
    }

    pub fn re_mut(&mut self) -> &mut [f64] {
        let n = self.shape.len();
        &mut self.planes[..n]
    }

    pub fn im_mut(&mut self) -> &mut [f64] {
        let n = self.shape.len();
        &mut self.planes[n..]
    }

    pub fn planes_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        let n = self.shape.len();
        self.planes.split_at_mut(n)
    }

    /// The stacked `[re; im]` buffer.
    pub fn planes(&self) -> &[f64] {
        &self.planes
    }

    pub fn into_planes(self) -> Vec<f64> {
        self.planes
    }

    pub fn real_part(&self) -> RealTensor {
        RealTensor {
            shape: self.shape,
            data: self.re().to_vec(),
        }
    }

    pub fn imag_part(&self) -> RealTensor {
        RealTensor {
            shape: self.shape,
            data: self.im().to_vec(),
        }
    }

    /// The stacked `[re; im]` planes as a real tensor with twice the channels.
    pub fn to_stacked(&self) -> RealTensor {
        RealTensor {
            shape: self.shape.with_channels(2 * self.shape.channels),
            data: self.planes.clone(),
        }
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.shape.height + y) * self.shape.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> Complex {
        let i = self.index(c, y, x);
        Complex::new(self.planes[i], self.planes[self.shape.len() + i])
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, z: Complex) {
        let i = self.index(c, y, x);
        let n = self.shape.len();
        self.planes[i] = z.re;
        self.planes[n + i] = z.im;
    }

    pub fn channels(&self, range: std::ops::Range<usize>) -> ComplexTensor {
        let n = self.shape.pixels();
        let (re, im) = (self.re(), self.im());
        let lo = range.start * n;
        let hi = range.end * n;
        let shape = self.shape.with_channels(range.len());
        let mut planes = Vec::with_capacity(2 * shape.len());
        planes.extend_from_slice(&re[lo..hi]);
        planes.extend_from_slice(&im[lo..hi]);
        ComplexTensor { shape, planes }
    }

    pub fn concat(parts: &[ComplexTensor]) -> Result<ComplexTensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("cannot concatenate zero tensors".into()))?;
        let (h, w) = (first.shape.height, first.shape.width);
        for p in parts {
            if p.shape.height != h || p.shape.width != w {
                return Err(Error::Dimension(format!(
                    "cannot concatenate {} with {}",
                    first.shape, p.shape
                )));
            }
        }
        let channels = parts.iter().map(|p| p.shape.channels).sum();
        let shape = Shape::new(channels, h, w);
        let mut planes = Vec::with_capacity(2 * shape.len());
        for p in parts {
            planes.extend_from_slice(p.re());
        }
        for p in parts {
            planes.extend_from_slice(p.im());
        }
        Ok(ComplexTensor { shape, planes })
    }

    /// Elementwise modulus.
    pub fn amplitude(&self) -> RealTensor {
        RealTensor {
            shape: self.shape,
            data: self
                .re()
                .iter()
                .zip(self.im())
                .map(|(r, i)| r.hypot(*i))
                .collect(),
        }
    }

    pub fn add(&self, other: &ComplexTensor) -> Result<ComplexTensor> {
        self.shape.ensure_eq(&other.shape)?;
        Ok(self.zip_planes(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &ComplexTensor) -> Result<ComplexTensor> {
        self.shape.ensure_eq(&other.shape)?;
        Ok(self.zip_planes(other, |a, b| a - b))
    }

    /// Multiply every element by a complex scalar.
    pub fn scale(&self, k: Complex) -> ComplexTensor {
        let n = self.shape.len();
        let mut planes = vec![0.0; 2 * n];
        let (re, im) = (self.re(), self.im());
        for i in 0..n {
            planes[i] = re[i] * k.re - im[i] * k.im;
            planes[n + i] = re[i] * k.im + im[i] * k.re;
        }
        ComplexTensor {
            shape: self.shape,
            planes,
        }
    }

    /// Multiply every element by a real scalar.
    pub fn scale_real(&self, k: f64) -> ComplexTensor {
        ComplexTensor {
            shape: self.shape,
            planes: self.planes.iter().map(|v| v * k).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.planes.iter().all(|v| v.is_finite())
    }

    fn zip_planes(&self, other: &ComplexTensor, f: impl Fn(f64, f64) -> f64) -> ComplexTensor {
        ComplexTensor {
            shape: self.shape,
            planes: self
                .planes
                .iter()
                .zip(&other.planes)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// Elementwise modulus of a complex tensor.
pub fn amplitude(x: &ComplexTensor) -> RealTensor {
    x.amplitude()
}
