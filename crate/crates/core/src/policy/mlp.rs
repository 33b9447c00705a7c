use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::rng::Rng;

/// Fully connected network with tanh hidden layers and a linear output.
///
/// Parameters live in one flat vector. Layer `l` stores its weight matrix
/// row-major as `W[i * out + j]` (input `i`, output `j`) followed by its bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    sizes: Vec<usize>,
}

/// Per-layer activations from a forward pass, needed by the reverse pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    dz: Vec<f64>,
    dx: Vec<f64>,
    /// Gradient with respect to the network output, filled by the heads.
    pub(crate) head: Vec<f64>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`.
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        Self { sizes }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("nonempty")
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Orthogonal init: each weight matrix has orthonormal rows or columns
    /// scaled by the layer's gain (`hidden_gain` for hidden layers,
    /// `output_gain` for the last). Biases start at zero.
    pub fn init(&self, rng: &mut Rng, hidden_gain: f64, output_gain: f64) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.param_count());
        let layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let gain = if l + 1 == layers { output_gain } else { hidden_gain };
            params.extend(orthogonal(w[0], w[1], gain, rng));
            params.extend(core::iter::repeat_n(0.0, w[1]));
        }
        params
    }

    pub fn forward(&self, params: &[f64], input: &[f64], tape: &mut Tape) {
        debug_assert_eq!(params.len(), self.param_count());
        debug_assert_eq!(input.len(), self.input_dim());
        let layers = self.sizes.len() - 1;
        tape.acts.resize_with(layers + 1, Vec::new);
        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(input);
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let weights = &params[offset..offset + n_in * n_out];
            let bias = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let (prev, rest) = tape.acts.split_at_mut(l + 1);
            let x = &prev[l];
            let z = &mut rest[0];
            z.clear();
            z.extend_from_slice(bias);
            for (xi, row) in x.iter().zip(weights.chunks_exact(n_out)) {
                axpy(*xi, row, z);
            }
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = libm::tanh(*v));
            }
        }
    }

    /// Accumulate `d(output · grad_out)/d params` into `grad`.
    pub fn backward(&self, params: &[f64], tape: &mut Tape, grad_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.param_count());
        let layers = self.sizes.len() - 1;
        let Tape { acts, dz, dx, .. } = tape;
        dz.clear();
        dz.extend_from_slice(grad_out);
        let mut end = self.param_count();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = end - (n_in * n_out + n_out);
            end = off;
            let x = &acts[l];
            let (g_w, g_b) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for (gb, d) in g_b.iter_mut().zip(dz.iter()) {
                *gb += d;
            }
            for (xi, g_row) in x.iter().zip(g_w.chunks_exact_mut(n_out)) {
                axpy(*xi, dz, g_row);
            }
            if l == 0 {
                break;
            }
            let weights = &params[off..off + n_in * n_out];
            dx.clear();
            dx.extend(weights.chunks_exact(n_out).map(|row| dot(row, dz)));
            // previous layer is tanh: d tanh = 1 - h^2
            for (d, h) in dx.iter_mut().zip(x) {
                *d *= 1.0 - h * h;
            }
            core::mem::swap(dz, dx);
        }
    }
}

fn orthogonal(n_in: usize, n_out: usize, gain: f64, rng: &mut Rng) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n_in * n_out).map(|_| StandardNormal.sample(rng)).collect();
    // orthonormalize the shorter family: columns if n_in >= n_out, else rows
    let (count, len) = if n_in >= n_out { (n_out, n_in) } else { (n_in, n_out) };
    let at = |v: usize, e: usize| if n_in >= n_out { e * n_out + v } else { v * n_out + e };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    for v in 0..count {
        let mut u: Vec<f64> = (0..len).map(|e| w[at(v, e)]).collect();
        for b in &basis {
            let proj = dot(&u, b);
            axpy(-proj, b, &mut u);
        }
        let norm = libm::sqrt(dot(&u, &u));
        u.iter_mut().for_each(|x| *x /= norm);
        basis.push(u);
    }
    for (v, u) in basis.iter().enumerate() {
        for (e, x) in u.iter().enumerate() {
            w[at(v, e)] = gain * x;
        }
    }
    w
}

/// `y += a * x`
#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with eight independent accumulators so it vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut lanes = [0.0; 8];
    let (ac, bc) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        for k in 0..8 {
            lanes[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ar.iter().zip(br) {
        tail += x * y;
    }
    ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7])) + tail
}

/// Zero-filled gradient buffer shaped like `params`.
pub fn zeros_like(params: &[f64]) -> Vec<f64> {
    vec![0.0; params.len()]
}
