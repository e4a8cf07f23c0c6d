//! Adam with bias correction, over a list of flat parameter arrays.

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    /// Zero moments for arrays of the given lengths.
    pub fn new(lengths: impl IntoIterator<Item = usize>) -> Self {
        let m: Vec<Vec<f64>> = lengths.into_iter().map(|n| vec![0.0; n]).collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            v: m.clone(),
            m,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn update(&mut self, params: &mut [&mut Vec<f64>], grads: &[Vec<f64>], lr: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter array count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient array count mismatch");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            assert_eq!(p.len(), g.len());
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![vec![0.3, -40.0, 1e-3]];
        let mut adam = Adam::new([3]);
        adam.update(&mut [&mut p], &g, 0.01);
        let expected = [0.99, -1.99, 0.49];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn matches_scalar_reference_on_quadratic() {
        // f(x) = (x - 3)^2, reference loop written out independently
        let (mut m, mut v, mut xr) = (0.0f64, 0.0f64, 0.0f64);
        let mut x = vec![0.0];
        let mut adam = Adam::new([1]);
        for t in 1..=200 {
            let g = 2.0 * (xr - 3.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            xr -= 0.05 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
            let g = vec![vec![2.0 * (x[0] - 3.0)]];
            adam.update(&mut [&mut x], &g, 0.05);
        }
        assert_eq!(x[0], xr);
        assert!((x[0] - 3.0).abs() < 0.05);
        assert_eq!(adam.steps(), 200);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![4.0; 5];
        let mut adam = Adam::new([5]);
        adam.update(&mut [&mut p], &[vec![0.0; 5]], 1.0);
        assert_eq!(p, vec![4.0; 5]);
    }
}
