use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{leaky_relu, leaky_relu_grad};
use super::{check_len, NnError, Result};

/// Feed-forward network: LeakyReLU on hidden layers, identity output.
///
/// Parameters live in one flat vector; each layer stores its weight matrix
/// row-major (`out x in`) followed by its bias.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ffnn {
    sizes: Vec<usize>,
    params: Vec<f64>,
    #[serde(skip)]
    version: u64,
}

impl PartialEq for Ffnn {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes && self.params == other.params
    }
}

/// Activations cached by [`Ffnn::forward`].
#[derive(Debug, Clone)]
pub struct Tape {
    version: u64,
    sizes: Vec<usize>,
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer.
    pre: Vec<Vec<f64>>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Ffnn {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "bad layer sizes {sizes:?}");
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
            version: 0,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(sizes);
        let mut offset = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.gen_range(-bound..bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes);
        check_len(net.params.len(), params.len())?;
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("nonempty sizes")
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.sizes.windows(2).map(move |w| {
            let start = offset;
            offset += w[0] * w[1] + w[1];
            (start, w[0], w[1])
        })
    }

    fn affine(&self, start: usize, n_in: usize, n_out: usize, x: &[f64]) -> Vec<f64> {
        let w = &self.params[start..start + n_in * n_out];
        let b = &self.params[start + n_in * n_out..start + n_in * n_out + n_out];
        (0..n_out)
            .map(|o| {
                let row = &w[o * n_in..(o + 1) * n_in];
                b[o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()
            })
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
        check_len(self.input_dim(), x.len())?;
        let n_layers = self.sizes.len() - 1;
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut cur = x.to_vec();
        for (l, (start, n_in, n_out)) in self.layers().enumerate() {
            let z = self.affine(start, n_in, n_out, &cur);
            let next = if l + 1 < n_layers {
                z.iter().map(|&v| leaky_relu(v)).collect()
            } else {
                z.clone()
            };
            inputs.push(std::mem::replace(&mut cur, next));
            pre.push(z);
        }
        let tape = Tape {
            version: self.version,
            sizes: self.sizes.clone(),
            inputs,
            pre,
        };
        Ok((cur, tape))
    }

    /// Forward pass without keeping a tape.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.input_dim(), x.len())?;
        let n_layers = self.sizes.len() - 1;
        let mut cur = x.to_vec();
        for (l, (start, n_in, n_out)) in self.layers().enumerate() {
            let mut z = self.affine(start, n_in, n_out, &cur);
            if l + 1 < n_layers {
                z.iter_mut().for_each(|v| *v = leaky_relu(*v));
            }
            cur = z;
        }
        Ok(cur)
    }

    /// Gradients of `y · dy` with respect to parameters and input.
    pub fn backward(&self, tape: &Tape, dy: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut grads = vec![0.0; self.params.len()];
        let dx = self.backward_into(tape, dy, &mut grads)?;
        Ok((grads, dx))
    }

    /// Like [`Ffnn::backward`] but accumulates parameter gradients into `grads`.
    pub fn backward_into(&self, tape: &Tape, dy: &[f64], grads: &mut [f64]) -> Result<Vec<f64>> {
        if tape.version != self.version || tape.sizes != self.sizes {
            return Err(NnError::StaleTape);
        }
        check_len(self.output_dim(), dy.len())?;
        check_len(self.params.len(), grads.len())?;
        let layers: Vec<_> = self.layers().collect();
        let n_layers = layers.len();
        let mut delta = dy.to_vec();
        for l in (0..n_layers).rev() {
            let (start, n_in, n_out) = layers[l];
            if l + 1 < n_layers {
                for (d, &z) in delta.iter_mut().zip(&tape.pre[l]) {
                    *d *= leaky_relu_grad(z);
                }
            }
            let x = &tape.inputs[l];
            let w = &self.params[start..start + n_in * n_out];
            let mut dx = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let g_row = &mut grads[start + o * n_in..start + (o + 1) * n_in];
                for (g, xi) in g_row.iter_mut().zip(x) {
                    *g += d * xi;
                }
                grads[start + n_in * n_out + o] += d;
                for (dxi, wi) in dx.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *dxi += d * wi;
                }
            }
            delta = dx;
        }
        Ok(delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_diff_check, leaky_relu, seeded_rng};

    #[test]
    fn zero_and_identity_nets() {
        let net = Ffnn::zeros(&[3, 4, 2]);
        assert_eq!(net.eval(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        let mut id = Ffnn::zeros(&[2, 2]);
        id.params_mut()[..4].copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(id.eval(&[0.7, -3.0]).unwrap(), vec![0.7, -3.0]);
        assert!(matches!(id.eval(&[1.0]), Err(NnError::DimMismatch { expected: 2, actual: 1 })));
    }

    #[test]
    fn matches_straight_line_evaluation() {
        let net = Ffnn::new(&[2, 3, 1], &mut seeded_rng(0));
        let p = net.params();
        let x = [1.0, -1.0];
        // Layout: W1 (3x2), b1 (3), W2 (1x3), b2 (1).
        let mut out = p[12];
        for h in 0..3 {
            let z = p[6 + h] + p[2 * h] * x[0] + p[2 * h + 1] * x[1];
            out += p[9 + h] * leaky_relu(z);
        }
        let (y, _) = net.forward(&x).unwrap();
        assert_eq!(y.len(), 1);
        assert!((y[0] - out).abs() < 1e-12);
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        let net = Ffnn::new(&[3, 2], &mut seeded_rng(4));
        let x = [0.5, -1.5, 2.0];
        let dy = [0.3, -0.7];
        let (_, tape) = net.forward(&x).unwrap();
        let (g, dx) = net.backward(&tape, &dy).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert!((g[o * 3 + i] - dy[o] * x[i]).abs() < 1e-15);
            }
            assert_eq!(g[6 + o], dy[o]);
        }
        let w = net.params();
        for i in 0..3 {
            assert!((dx[i] - (dy[0] * w[i] + dy[1] * w[3 + i])).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Ffnn::new(&[4, 5, 3], &mut seeded_rng(1));
        let (_, tape) = net.forward(&[1.0, 2.0, -1.0, 0.5]).unwrap();
        let (g, dx) = net.backward(&tape, &[0.0; 3]).unwrap();
        assert!(g.iter().chain(&dx).all(|&v| v == 0.0));
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut net = Ffnn::new(&[2, 2], &mut seeded_rng(2));
        let (_, tape) = net.forward(&[1.0, 1.0]).unwrap();
        net.params_mut()[0] += 1.0;
        assert!(matches!(net.backward(&tape, &[1.0, 1.0]), Err(NnError::StaleTape)));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let net = Ffnn::new(&[4, 6, 5, 2], &mut seeded_rng(3));
        let x = [0.3, -0.8, 1.1, 0.05];
        let dy = [1.0, -0.5];
        let (_, tape) = net.forward(&x).unwrap();
        let (g, dx) = net.backward(&tape, &dy).unwrap();
        let readout = |params: &[f64]| {
            let n = Ffnn::from_params(net.sizes(), params.to_vec()).unwrap();
            let y = n.eval(&x).unwrap();
            y[0] * dy[0] + y[1] * dy[1]
        };
        let report = finite_diff_check(readout, net.params(), &g, 1e-5, 1e-4);
        assert!(report.pass, "{report:?}");
        let wrt_x = |xs: &[f64]| {
            let y = net.eval(xs).unwrap();
            y[0] * dy[0] + y[1] * dy[1]
        };
        assert!(finite_diff_check(wrt_x, &x, &dx, 1e-5, 1e-4).pass);
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = Ffnn::new(&[8, 32, 1], &mut seeded_rng(42));
        let b = Ffnn::new(&[8, 32, 1], &mut seeded_rng(42));
        assert_eq!(a.params(), b.params());
        let c = Ffnn::new(&[8, 32, 1], &mut seeded_rng(43));
        assert_ne!(a.params(), c.params());
        let bound = (6.0f64 / 40.0).sqrt();
        assert!(a.params()[..256].iter().all(|w| w.abs() <= bound));
    }
}
