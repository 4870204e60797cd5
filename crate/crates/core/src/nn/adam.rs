//! Adam over a flat parameter vector. Real and imaginary planes of complex
//! weights are separate entries and get separate moment estimates.

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }

    /// One bias-corrected update of `params` against `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = lr * c2.sqrt() / c1;
        let eps = self.eps * c2.sqrt();
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= step * self.m[i] / (self.v[i].sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_the_gradient_sign() {
        let mut p = vec![1.0, -1.0, 0.5];
        let mut opt = Adam::new(3, 0.9, 0.999, 1e-8);
        opt.step(&mut p, &[3.0, -0.01, 0.0], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-5);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn matches_textbook_update_over_several_steps() {
        let (b1, b2, eps, lr) = (0.9, 0.999, 1e-8, 0.01);
        let grads = [0.3, -1.2, 0.7, 0.05];
        let mut p = vec![0.2];
        let mut opt = Adam::new(1, b1, b2, eps);
        let (mut m, mut v, mut q) = (0.0, 0.0, 0.2);
        for (t, g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - f64::powi(b1, t));
            let vh = v / (1.0 - f64::powi(b2, t));
            q -= lr * mh / (vh.sqrt() + eps);
            opt.step(&mut p, &[*g], lr);
            assert!((p[0] - q).abs() < 1e-12);
        }
    }
}
