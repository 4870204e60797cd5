//! Complex mean squared error.
//!
//! The per-sample term is the squared modulus of the difference summed over
//! every pixel; a batch loss divides the sum of per-sample terms by the batch
//! size only.

use crate::error::{Error, Result};
use crate::tensor::{ComplexTensor, RealTensor};

/// Squared complex error of one sample: `Σ |ŷ − y|²` over all elements.
pub fn complex_mse(yhat: &ComplexTensor, y: &ComplexTensor) -> Result<f64> {
    yhat.shape().ensure_eq(&y.shape())?;
    Ok(sum_sq_diff(yhat.planes(), y.planes()))
}

/// Batch loss `(1/n) Σ_i Σ |ŷ_i − y_i|²`.
pub fn complex_mse_batch(yhat: &[ComplexTensor], y: &[ComplexTensor]) -> Result<f64> {
    if yhat.len() != y.len() || yhat.is_empty() {
        return Err(Error::Dimension(format!(
            "batch sizes {} and {} (must be equal and non-zero)",
            yhat.len(),
            y.len()
        )));
    }
    let mut total = 0.0;
    for (a, b) in yhat.iter().zip(y) {
        total += complex_mse(a, b)?;
    }
    Ok(total / y.len() as f64)
}

/// Real counterpart used by the RF and two-branch networks.
pub fn real_mse(yhat: &RealTensor, y: &RealTensor) -> Result<f64> {
    yhat.shape().ensure_eq(&y.shape())?;
    Ok(sum_sq_diff(yhat.data(), y.data()))
}

fn sum_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Complex, Shape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_for_identical_inputs() {
        let y = ComplexTensor::from_fn(Shape::new(1, 3, 3), |c, r, x| {
            Complex::new((c + r) as f64, x as f64)
        });
        assert_eq!(complex_mse(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn single_pixel_three_four() {
        let s = Shape::new(1, 1, 1);
        let a = ComplexTensor::from_parts(s, &[3.0], &[4.0]).unwrap();
        let b = ComplexTensor::zeros(s);
        assert_eq!(complex_mse_batch(&[a], &[b]).unwrap(), 25.0);
    }

    #[test]
    fn matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = Shape::new(2, 4, 3);
        let mut gen = || {
            ComplexTensor::from_fn(s, |_, _, _| {
                Complex::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
            })
        };
        let yhat: Vec<_> = (0..3).map(|_| gen()).collect();
        let y: Vec<_> = (0..3).map(|_| gen()).collect();
        let mut oracle = 0.0;
        for (a, b) in yhat.iter().zip(&y) {
            for c in 0..2 {
                for r in 0..4 {
                    for x in 0..3 {
                        oracle += (a.get(c, r, x) - b.get(c, r, x)).norm_sqr();
                    }
                }
            }
        }
        oracle /= 3.0;
        assert!((complex_mse_batch(&yhat, &y).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_a_dimension_error() {
        let a = ComplexTensor::zeros(Shape::new(1, 2, 2));
        let b = ComplexTensor::zeros(Shape::new(1, 2, 1));
        assert!(matches!(complex_mse(&a, &b), Err(Error::Dimension(_))));
        assert!(complex_mse_batch(&[], &[]).is_err());
    }
}
