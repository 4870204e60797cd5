//! Maxout activations.
//!
//! Input channels are split into consecutive groups of `pieces` maps; each
//! output channel takes, per pixel, the group member with the largest value
//! (real maxout) or the largest modulus (amplitude maxout, which passes both
//! the real and the imaginary part of the winner). Ties go to the lowest
//! channel index in the group.

use crate::error::{Error, Result};
use crate::tensor::{ComplexTensor, RealTensor, Shape};

/// Per-pixel winner within each group, recorded for the backward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub pieces: usize,
    /// Output shape (`channels = input channels / pieces`).
    pub shape: Shape,
    /// Offset of the winner inside its group, one entry per output element.
    pub index: Vec<u8>,
}

fn output_shape(input: Shape, pieces: usize) -> Result<Shape> {
    if pieces == 0 || pieces > 256 || !input.channels.is_multiple_of(pieces) {
        return Err(Error::Config(format!(
            "{} channels cannot be grouped into {pieces}-piece maxout units",
            input.channels
        )));
    }
    Ok(input.with_channels(input.channels / pieces))
}

/// Real maxout over groups of `pieces` channels.
pub fn mu_forward(z: &RealTensor, pieces: usize) -> Result<(RealTensor, Selection)> {
    let shape = output_shape(z.shape(), pieces)?;
    let n = shape.pixels();
    let data = z.data();
    let mut out = RealTensor::zeros(shape);
    let mut index = vec![0u8; shape.len()];
    for g in 0..shape.channels {
        let base = g * pieces * n;
        let (dst, idx) = (
            &mut out.data_mut()[g * n..(g + 1) * n],
            &mut index[g * n..(g + 1) * n],
        );
        dst.copy_from_slice(&data[base..base + n]);
        for p in 1..pieces {
            let src = &data[base + p * n..base + (p + 1) * n];
            for i in 0..n {
                if src[i] > dst[i] {
                    dst[i] = src[i];
                    idx[i] = p as u8;
                }
            }
        }
    }
    Ok((
        out,
        Selection {
            pieces,
            shape,
            index,
        },
    ))
}

/// Amplitude maxout: the complex element of largest modulus in each group.
pub fn amu_forward(z: &ComplexTensor, pieces: usize) -> Result<(ComplexTensor, Selection)> {
    let shape = output_shape(z.shape(), pieces)?;
    let n = shape.pixels();
    let (re, im) = (z.re(), z.im());
    let mut out = ComplexTensor::zeros(shape);
    let mut index = vec![0u8; shape.len()];
    let mut best = vec![0.0; n];
    {
        let (ore, oim) = out.planes_mut();
        for g in 0..shape.channels {
            let base = g * pieces * n;
            let idx = &mut index[g * n..(g + 1) * n];
            for i in 0..n {
                best[i] = re[base + i] * re[base + i] + im[base + i] * im[base + i];
            }
            for p in 1..pieces {
                let off = base + p * n;
                for i in 0..n {
                    let a = re[off + i] * re[off + i] + im[off + i] * im[off + i];
                    if a > best[i] {
                        best[i] = a;
                        idx[i] = p as u8;
                    }
                }
            }
            for i in 0..n {
                let src = base + idx[i] as usize * n + i;
                ore[g * n + i] = re[src];
                oim[g * n + i] = im[src];
            }
        }
    }
    Ok((
        out,
        Selection {
            pieces,
            shape,
            index,
        },
    ))
}

/// Route an output gradient plane back to the selected input channel of each group.
fn scatter(sel: &Selection, dout: &[f64], dz: &mut [f64]) {
    let n = sel.shape.pixels();
    for g in 0..sel.shape.channels {
        let base = g * sel.pieces * n;
        for i in 0..n {
            let k = g * n + i;
            dz[base + sel.index[k] as usize * n + i] = dout[k];
        }
    }
}

pub fn mu_backward(sel: &Selection, dout: &RealTensor) -> RealTensor {
    let mut dz = RealTensor::zeros(sel.shape.with_channels(sel.shape.channels * sel.pieces));
    scatter(sel, dout.data(), dz.data_mut());
    dz
}

pub fn amu_backward(sel: &Selection, dout: &ComplexTensor) -> ComplexTensor {
    let mut dz = ComplexTensor::zeros(sel.shape.with_channels(sel.shape.channels * sel.pieces));
    let (dre, dim) = dz.planes_mut();
    scatter(sel, dout.re(), dre);
    scatter(sel, dout.im(), dim);
    dz
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Complex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_piece_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = ComplexTensor::from_fn(Shape::new(3, 4, 4), |_, _, _| {
            Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let (out, sel) = amu_forward(&z, 1).unwrap();
        assert_eq!(out, z);
        assert!(sel.index.iter().all(|&i| i == 0));
        let r = z.real_part();
        let (out, sel) = mu_forward(&r, 1).unwrap();
        assert_eq!(out, r);
        assert!(sel.index.iter().all(|&i| i == 0));
    }

    #[test]
    fn amu_picks_largest_modulus() {
        let z = ComplexTensor::from_parts(Shape::new(2, 1, 1), &[1.0, 3.0], &[1.0, 4.0]).unwrap();
        let (out, sel) = amu_forward(&z, 2).unwrap();
        assert_eq!(out.get(0, 0, 0), Complex::new(3.0, 4.0));
        assert_eq!(sel.index, vec![1]);
    }

    #[test]
    fn amu_tie_goes_to_lowest_index() {
        let z = ComplexTensor::from_parts(Shape::new(2, 1, 1), &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        let (out, sel) = amu_forward(&z, 2).unwrap();
        assert_eq!(out.get(0, 0, 0), Complex::new(1.0, 0.0));
        assert_eq!(sel.index, vec![0]);
    }

    #[test]
    fn mu_picks_maximum() {
        let z = RealTensor::from_vec(Shape::new(4, 1, 1), vec![-2.0, 5.0, 0.0, 1.0]).unwrap();
        let (out, _) = mu_forward(&z, 4).unwrap();
        assert_eq!(out.data(), &[5.0]);
    }

    #[test]
    fn mu_matches_per_pixel_max_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let shape = Shape::new(12, 5, 6);
        let z = RealTensor::from_fn(shape, |_, _, _| rng.gen_range(-1.0..1.0));
        let (out, _) = mu_forward(&z, 4).unwrap();
        for g in 0..3 {
            for y in 0..5 {
                for x in 0..6 {
                    let m = (0..4)
                        .map(|p| z.get(4 * g + p, y, x))
                        .fold(f64::NEG_INFINITY, f64::max);
                    assert_eq!(out.get(g, y, x), m);
                }
            }
        }
    }

    #[test]
    fn indivisible_channels_are_a_configuration_error() {
        let z = ComplexTensor::zeros(Shape::new(6, 2, 2));
        assert!(matches!(amu_forward(&z, 4), Err(Error::Config(_))));
        assert!(matches!(
            mu_forward(&z.real_part(), 4),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn backward_routes_only_through_winners() {
        let z = ComplexTensor::from_parts(
            Shape::new(2, 1, 2),
            &[1.0, 0.0, 0.5, 2.0],
            &[0.0, 0.1, 0.0, 0.0],
        )
        .unwrap();
        let (_, sel) = amu_forward(&z, 2).unwrap();
        let dout =
            ComplexTensor::from_parts(Shape::new(1, 1, 2), &[7.0, 8.0], &[-1.0, -2.0]).unwrap();
        let dz = amu_backward(&sel, &dout);
        assert_eq!(dz.re(), &[7.0, 0.0, 0.0, 8.0]);
        assert_eq!(dz.im(), &[-1.0, 0.0, 0.0, -2.0]);
    }
}
