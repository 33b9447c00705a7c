use alloc::vec;
use alloc::vec::Vec;

/// Adam optimizer state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One descent step along `grad`. An all-zero gradient is a no-op, so it
    /// leaves both parameters and moment estimates untouched.
    pub fn descend(&mut self, params: &mut [f64], grad: &[f64]) {
        self.apply(params, grad, -1.0);
    }

    /// One ascent step along `grad`; see [`Adam::descend`].
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64]) {
        self.apply(params, grad, 1.0);
    }

    fn apply(&mut self, params: &mut [f64], grad: &[f64], sign: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        if grad.iter().all(|g| *g == 0.0) {
            return;
        }
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p += sign * self.lr * (*m / c1) / (libm::sqrt(*v / c2) + self.eps);
        }
    }
}
