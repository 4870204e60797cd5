//! Fully convolutional maxout networks with recorded forward passes.

use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::netspec::{Domain, NetworkSpec};
use crate::nn::conv::{
    complex_conv2d, complex_conv2d_backward, conv2d, conv2d_backward, ComplexConvLayer,
    RealConvLayer,
};
use crate::nn::maxout::{amu_backward, amu_forward, mu_backward, mu_forward, Selection};
use crate::tensor::{ComplexTensor, RealTensor, Shape};

/// A network input, output or intermediate feature map.
#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    Real(RealTensor),
    Complex(ComplexTensor),
}

impl Signal {
    pub fn shape(&self) -> Shape {
        match self {
            Signal::Real(t) => t.shape(),
            Signal::Complex(t) => t.shape(),
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            Signal::Real(_) => Domain::Real,
            Signal::Complex(_) => Domain::Complex,
        }
    }

    /// All real scalars (the `[re; im]` planes for complex signals).
    pub fn values(&self) -> &[f64] {
        match self {
            Signal::Real(t) => t.data(),
            Signal::Complex(t) => t.planes(),
        }
    }

    pub fn as_complex(&self) -> Option<&ComplexTensor> {
        match self {
            Signal::Complex(t) => Some(t),
            Signal::Real(_) => None,
        }
    }

    pub fn as_real(&self) -> Option<&RealTensor> {
        match self {
            Signal::Real(t) => Some(t),
            Signal::Complex(_) => None,
        }
    }

    /// Same-domain signal built from a values buffer laid out like [`Signal::values`].
    pub(crate) fn with_values(&self, shape: Shape, values: Vec<f64>) -> Result<Signal> {
        Ok(match self {
            Signal::Real(_) => Signal::Real(RealTensor::from_vec(shape, values)?),
            Signal::Complex(_) => Signal::Complex(ComplexTensor::from_planes(shape, values)?),
        })
    }

    fn channels(&self, range: Range<usize>) -> Signal {
        match self {
            Signal::Real(t) => Signal::Real(t.channels(range)),
            Signal::Complex(t) => Signal::Complex(t.channels(range)),
        }
    }

    /// Every scalar multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Signal {
        match self {
            Signal::Real(t) => Signal::Real(t.scale(k)),
            Signal::Complex(t) => Signal::Complex(t.scale_real(k)),
        }
    }

    /// Crop a spatial window (all channels).
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Signal {
        let s = self.shape();
        let planes = self.values().len() / s.len();
        let mut out = Vec::with_capacity(planes * s.channels * height * width);
        for p in 0..planes {
            for c in 0..s.channels {
                let base = (p * s.channels + c) * s.pixels();
                for y in top..top + height {
                    let row = base + y * s.width;
                    out.extend_from_slice(&self.values()[row + left..row + left + width]);
                }
            }
        }
        self.with_values(Shape::new(s.channels, height, width), out)
            .expect("crop buffer matches shape")
    }

    pub fn concat(parts: &[Signal]) -> Result<Signal> {
        match parts.first() {
            Some(Signal::Real(_)) => {
                let v: Option<Vec<RealTensor>> =
                    parts.iter().map(|p| p.as_real().cloned()).collect();
                let v = v.ok_or_else(|| Error::Dimension("mixed real/complex concat".into()))?;
                Ok(Signal::Real(RealTensor::concat(&v)?))
            }
            Some(Signal::Complex(_)) => {
                let v: Option<Vec<ComplexTensor>> =
                    parts.iter().map(|p| p.as_complex().cloned()).collect();
                let v = v.ok_or_else(|| Error::Dimension("mixed real/complex concat".into()))?;
                Ok(Signal::Complex(ComplexTensor::concat(&v)?))
            }
            None => Err(Error::Dimension("cannot concatenate zero signals".into())),
        }
    }
}

/// One convolution of a stage.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvUnit {
    Real(RealConvLayer),
    Complex(ComplexConvLayer),
}

impl ConvUnit {
    pub fn param_count(&self) -> usize {
        match self {
            ConvUnit::Real(l) => l.param_count(),
            ConvUnit::Complex(l) => l.param_count(),
        }
    }

    pub fn out_channels(&self) -> usize {
        match self {
            ConvUnit::Real(l) => l.out_channels,
            ConvUnit::Complex(l) => l.out_channels,
        }
    }

    pub fn in_channels(&self) -> usize {
        match self {
            ConvUnit::Real(l) => l.in_channels,
            ConvUnit::Complex(l) => l.in_channels,
        }
    }

    pub fn kernel(&self) -> (usize, usize) {
        match self {
            ConvUnit::Real(l) => l.kernel,
            ConvUnit::Complex(l) => l.kernel,
        }
    }

    /// Parameter arrays in archive order: kernels before biases, real before imaginary.
    pub fn params(&self) -> Vec<&[f64]> {
        match self {
            ConvUnit::Real(l) => vec![&l.weight, &l.bias],
            ConvUnit::Complex(l) => vec![&l.w_re, &l.w_im, &l.b_re, &l.b_im],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            ConvUnit::Real(l) => vec![&mut l.weight, &mut l.bias],
            ConvUnit::Complex(l) => vec![&mut l.w_re, &mut l.w_im, &mut l.b_re, &mut l.b_im],
        }
    }

    fn forward(&self, x: &Signal) -> Result<Signal> {
        match (self, x) {
            (ConvUnit::Real(l), Signal::Real(t)) => Ok(Signal::Real(conv2d(t, l)?)),
            (ConvUnit::Complex(l), Signal::Complex(t)) => {
                Ok(Signal::Complex(complex_conv2d(t, l)?))
            }
            _ => Err(Error::Dimension(
                "signal domain does not match layer".into(),
            )),
        }
    }

    fn backward(
        &self,
        x: &Signal,
        dz: &Signal,
        grad: &mut [f64],
        need_dx: bool,
    ) -> Result<Option<Signal>> {
        match (self, x, dz) {
            (ConvUnit::Real(l), Signal::Real(x), Signal::Real(dz)) => {
                Ok(conv2d_backward(x, l, dz, grad, need_dx)?.map(Signal::Real))
            }
            (ConvUnit::Complex(l), Signal::Complex(x), Signal::Complex(dz)) => {
                Ok(complex_conv2d_backward(x, l, dz, grad, need_dx)?.map(Signal::Complex))
            }
            _ => Err(Error::Dimension(
                "signal domain does not match layer".into(),
            )),
        }
    }

    /// Uniform Glorot initialization of every weight plane; biases zeroed.
    /// Fans count complex weights as single units.
    pub fn xavier_init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (kh, kw) = self.kernel();
        let fan_in = self.in_channels() * kh * kw;
        let fan_out = self.out_channels() * kh * kw;
        let bound = xavier_bound(fan_in, fan_out);
        let mut arrays = self.params_mut();
        let n = arrays.len();
        for (i, a) in arrays.iter_mut().enumerate() {
            // the trailing half of the arrays are biases
            if i >= n / 2 {
                a.fill(0.0);
            } else {
                for v in a.iter_mut() {
                    *v = rng.gen_range(-bound..bound);
                }
            }
        }
    }
}

/// Half-width of the Glorot uniform law, `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Initialize a complex layer in place (weights uniform, biases zero).
pub fn xavier_init<R: Rng + ?Sized>(layer: &mut ComplexConvLayer, rng: &mut R) {
    let mut unit = ConvUnit::Complex(std::mem::replace(
        layer,
        ComplexConvLayer::zeros(0, 0, (1, 1)),
    ));
    unit.xavier_init(rng);
    if let ConvUnit::Complex(l) = unit {
        *layer = l;
    }
}

#[derive(Debug, Clone)]
struct Stage {
    units: Range<usize>,
    pieces: usize,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Signal>,
    selections: Vec<Vec<Selection>>,
    pub output: Signal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    units: Vec<ConvUnit>,
    stages: Vec<(Range<usize>, usize)>,
}

impl Network {
    /// Instantiate with all parameters zero.
    pub fn new(spec: &NetworkSpec) -> Result<Network> {
        spec.validate()?;
        let mut units = Vec::new();
        let mut stages = Vec::new();
        let mut channels = spec.in_channels;
        for layer in &spec.layers {
            let start = units.len();
            for &k in &layer.kernels {
                units.push(match spec.domain {
                    Domain::Real => {
                        ConvUnit::Real(RealConvLayer::zeros(layer.kernel_count, channels, k))
                    }
                    Domain::Complex => {
                        ConvUnit::Complex(ComplexConvLayer::zeros(layer.kernel_count, channels, k))
                    }
                });
            }
            stages.push((start..units.len(), layer.activation.pieces));
            channels = layer.out_channels();
        }
        Ok(Network {
            spec: spec.clone(),
            units,
            stages,
        })
    }

    /// Instantiate and Glorot-initialize from a seeded generator.
    pub fn initialized<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Result<Network> {
        let mut net = Network::new(spec)?;
        net.xavier_init(rng);
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn units(&self) -> &[ConvUnit] {
        &self.units
    }

    pub fn units_mut(&mut self) -> &mut [ConvUnit] {
        &mut self.units
    }

    pub fn param_count(&self) -> usize {
        self.units.iter().map(ConvUnit::param_count).sum()
    }

    pub fn xavier_init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for u in &mut self.units {
            u.xavier_init(rng);
        }
    }

    /// All parameters, flattened in archive order.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for u in &self.units {
            for a in u.params() {
                out.extend_from_slice(a);
            }
        }
        out
    }

    pub fn set_params_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "{} values for {} parameters",
                values.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for u in &mut self.units {
            for a in u.params_mut() {
                a.copy_from_slice(&values[off..off + a.len()]);
                off += a.len();
            }
        }
        Ok(())
    }

    /// Mutable parameter arrays in archive order.
    pub fn param_arrays_mut(&mut self) -> Vec<&mut [f64]> {
        self.units
            .iter_mut()
            .flat_map(ConvUnit::params_mut)
            .collect()
    }

    /// Round every parameter to the nearest `f32` (what a weight archive stores).
    pub fn quantize_f32(&mut self) {
        for a in self.param_arrays_mut() {
            for v in a.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    fn stage_list(&self) -> impl Iterator<Item = Stage> + '_ {
        self.stages.iter().map(|(r, p)| Stage {
            units: r.clone(),
            pieces: *p,
        })
    }

    fn check_input(&self, x: &Signal) -> Result<()> {
        if x.domain() != self.spec.domain {
            return Err(Error::Dimension(format!(
                "{:?} network given a {:?} input",
                self.spec.domain,
                x.domain()
            )));
        }
        if x.shape().channels != self.spec.in_channels {
            return Err(Error::Dimension(format!(
                "network expects {} input channels, got {}",
                self.spec.in_channels,
                x.shape().channels
            )));
        }
        Ok(())
    }

    fn run_stage(&self, stage: &Stage, x: &Signal) -> Result<(Signal, Vec<Selection>)> {
        let mut outs = Vec::with_capacity(stage.units.len());
        let mut sels = Vec::with_capacity(stage.units.len());
        for u in &self.units[stage.units.clone()] {
            let z = u.forward(x)?;
            let (a, sel) = match z {
                Signal::Real(t) => {
                    let (a, s) = mu_forward(&t, stage.pieces)?;
                    (Signal::Real(a), s)
                }
                Signal::Complex(t) => {
                    let (a, s) = amu_forward(&t, stage.pieces)?;
                    (Signal::Complex(a), s)
                }
            };
            outs.push(a);
            sels.push(sel);
        }
        let out = if outs.len() == 1 {
            outs.pop().expect("one path")
        } else {
            Signal::concat(&outs)?
        };
        Ok((out, sels))
    }

    /// Inference.
    pub fn forward(&self, x: &Signal) -> Result<Signal> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for stage in self.stage_list() {
            cur = self.run_stage(&stage, &cur)?.0;
        }
        Ok(cur)
    }

    /// Forward pass keeping stage inputs and maxout selections.
    pub fn forward_recorded(&self, x: &Signal) -> Result<Tape> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.stages.len());
        let mut selections = Vec::with_capacity(self.stages.len());
        let mut cur = x.clone();
        for stage in self.stage_list() {
            let (next, sels) = self.run_stage(&stage, &cur)?;
            inputs.push(std::mem::replace(&mut cur, next));
            selections.push(sels);
        }
        Ok(Tape {
            inputs,
            selections,
            output: cur,
        })
    }

    /// Reverse pass. `dout` is the loss gradient with respect to the output
    /// (for complex outputs: with respect to its real and imaginary planes).
    /// Parameter gradients are accumulated into `grad` in archive order.
    pub fn backward(&self, tape: &Tape, dout: &Signal, grad: &mut [f64]) -> Result<()> {
        if grad.len() != self.param_count() {
            return Err(Error::Dimension(
                "gradient buffer has the wrong length".into(),
            ));
        }
        if dout.shape() != tape.output.shape() || dout.domain() != tape.output.domain() {
            return Err(Error::Dimension(
                "output gradient does not match the output".into(),
            ));
        }
        let offsets: Vec<usize> = self
            .units
            .iter()
            .scan(0, |acc, u| {
                let o = *acc;
                *acc += u.param_count();
                Some(o)
            })
            .collect();

        let stages: Vec<Stage> = self.stage_list().collect();
        let mut d = dout.clone();
        for (si, stage) in stages.iter().enumerate().rev() {
            let x = &tape.inputs[si];
            let need_dx = si > 0;
            let per_path = d.shape().channels / stage.units.len();
            let mut dx_total: Option<Vec<f64>> = None;
            for (pi, ui) in stage.units.clone().enumerate() {
                let sel = &tape.selections[si][pi];
                let dpath = if stage.units.len() == 1 {
                    d.clone()
                } else {
                    d.channels(pi * per_path..(pi + 1) * per_path)
                };
                let dz = match &dpath {
                    Signal::Real(t) => Signal::Real(mu_backward(sel, t)),
                    Signal::Complex(t) => Signal::Complex(amu_backward(sel, t)),
                };
                let unit = &self.units[ui];
                let g = &mut grad[offsets[ui]..offsets[ui] + unit.param_count()];
                if let Some(dx) = unit.backward(x, &dz, g, need_dx)? {
                    match &mut dx_total {
                        None => dx_total = Some(dx.values().to_vec()),
                        Some(acc) => {
                            for (a, b) in acc.iter_mut().zip(dx.values()) {
                                *a += b;
                            }
                        }
                    }
                }
            }
            if let Some(values) = dx_total {
                d = x.with_values(x.shape(), values)?;
            }
        }
        Ok(())
    }
}
