//! Graph attention over an entity graph, forward and reverse mode.
//!
//! For head `k`, `z_i = W_k h_i`, `e_ij = LeakyReLU(a_k · [z_i ⊕ z_j])` and
//! `α_ij = softmax_j(e_ij)` over the neighbors of `i`. The default update is
//! `h_i' = LeakyReLU(Σ_j α_ij z_i)`; with `aggregate_neighbors` it becomes
//! `h_i' = LeakyReLU(Σ_j α_ij z_j)`. Heads are averaged before the
//! activation, and a node without neighbors outputs zeros.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::EntityGraph;
use crate::nn::{check_len, leaky_relu, leaky_relu_grad, softmax, NnError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gat {
    in_dim: usize,
    out_dim: usize,
    layers: usize,
    heads: usize,
    aggregate_neighbors: bool,
    /// Per layer, per head: `W` (`out x in`, row-major) then `a` (`2 out`).
    params: Vec<f64>,
}

/// Per-node adjacency used by the layer; `neighbors[i]` excludes `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    pub neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn from_graph(g: &EntityGraph) -> Self {
        Self {
            neighbors: (0..g.node_count()).map(|i| g.neighbors(i).to_vec()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

#[derive(Debug, Clone)]
struct HeadTape {
    z: Vec<Vec<f64>>,
    /// Pre-activation attention logits, aligned with `neighbors[i]`.
    s: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct LayerTape {
    input: Vec<Vec<f64>>,
    heads: Vec<HeadTape>,
    /// Head-averaged pre-activation messages.
    m: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct GatTape {
    layers: Vec<LayerTape>,
}

impl Gat {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        layers: usize,
        heads: usize,
        aggregate_neighbors: bool,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(layers >= 1 && heads >= 1, "a GAT needs at least one layer and one head");
        let mut gat = Self {
            in_dim,
            out_dim,
            layers,
            heads,
            aggregate_neighbors,
            params: Vec::new(),
        };
        for l in 0..layers {
            let d_in = gat.layer_in(l);
            let w_bound = (6.0 / (d_in + out_dim) as f64).sqrt();
            let a_bound = (6.0 / (2 * out_dim + 1) as f64).sqrt();
            for _ in 0..heads {
                for _ in 0..out_dim * d_in {
                    gat.params.push(rng.gen_range(-w_bound..w_bound));
                }
                for _ in 0..2 * out_dim {
                    gat.params.push(rng.gen_range(-a_bound..a_bound));
                }
            }
        }
        gat
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn aggregates_neighbors(&self) -> bool {
        self.aggregate_neighbors
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn layer_in(&self, l: usize) -> usize {
        if l == 0 {
            self.in_dim
        } else {
            self.out_dim
        }
    }

    fn head_size(&self, l: usize) -> usize {
        self.out_dim * self.layer_in(l) + 2 * self.out_dim
    }

    fn head_offset(&self, l: usize, k: usize) -> usize {
        (0..l).map(|j| self.heads * self.head_size(j)).sum::<usize>() + k * self.head_size(l)
    }

    pub fn forward(&self, adj: &Adjacency, h0: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, GatTape)> {
        check_len(adj.len(), h0.len())?;
        for h in h0 {
            check_len(self.in_dim, h.len())?;
        }
        let n = h0.len();
        let d = self.out_dim;
        let mut cur = h0.to_vec();
        let mut tapes = Vec::with_capacity(self.layers);
        for l in 0..self.layers {
            let d_in = self.layer_in(l);
            let mut m = vec![vec![0.0; d]; n];
            let mut heads = Vec::with_capacity(self.heads);
            for k in 0..self.heads {
                let off = self.head_offset(l, k);
                let w = &self.params[off..off + d * d_in];
                let a = &self.params[off + d * d_in..off + d * d_in + 2 * d];
                let z: Vec<Vec<f64>> = cur
                    .iter()
                    .map(|h| (0..d).map(|o| dot(&w[o * d_in..(o + 1) * d_in], h)).collect())
                    .collect();
                let left: Vec<f64> = z.iter().map(|zi| dot(&a[..d], zi)).collect();
                let right: Vec<f64> = z.iter().map(|zi| dot(&a[d..], zi)).collect();
                let mut s_all = Vec::with_capacity(n);
                let mut alpha_all = Vec::with_capacity(n);
                for i in 0..n {
                    let nb = &adj.neighbors[i];
                    let s: Vec<f64> = nb.iter().map(|&j| left[i] + right[j]).collect();
                    let e: Vec<f64> = s.iter().map(|&x| leaky_relu(x)).collect();
                    let alpha = if nb.is_empty() { Vec::new() } else { softmax(&e) };
                    for (&j, &al) in nb.iter().zip(&alpha) {
                        let src = if self.aggregate_neighbors { &z[j] } else { &z[i] };
                        for (mo, zo) in m[i].iter_mut().zip(src) {
                            *mo += al * zo / self.heads as f64;
                        }
                    }
                    s_all.push(s);
                    alpha_all.push(alpha);
                }
                heads.push(HeadTape {
                    z,
                    s: s_all,
                    alpha: alpha_all,
                });
            }
            let next = m.iter().map(|mi| mi.iter().map(|&x| leaky_relu(x)).collect()).collect();
            tapes.push(LayerTape {
                input: std::mem::replace(&mut cur, next),
                heads,
                m,
            });
        }
        Ok((cur, GatTape { layers: tapes }))
    }

    /// Accumulates parameter gradients of `Σ_i out_i · dout_i` into `grads`
    /// and returns the gradient with respect to the input features.
    pub fn backward_into(
        &self,
        adj: &Adjacency,
        tape: &GatTape,
        dout: &[Vec<f64>],
        grads: &mut [f64],
    ) -> Result<Vec<Vec<f64>>> {
        if tape.layers.len() != self.layers {
            return Err(NnError::StaleTape);
        }
        check_len(self.params.len(), grads.len())?;
        check_len(adj.len(), dout.len())?;
        let n = adj.len();
        let d = self.out_dim;
        let mut delta: Vec<Vec<f64>> = dout.to_vec();
        for l in (0..self.layers).rev() {
            let lt = &tape.layers[l];
            let d_in = self.layer_in(l);
            let dm: Vec<Vec<f64>> = delta
                .iter()
                .zip(&lt.m)
                .map(|(dl, mi)| {
                    dl.iter()
                        .zip(mi)
                        .map(|(g, &x)| g * leaky_relu_grad(x) / self.heads as f64)
                        .collect()
                })
                .collect();
            let mut dh = vec![vec![0.0; d_in]; n];
            for (k, ht) in lt.heads.iter().enumerate() {
                let off = self.head_offset(l, k);
                let w = &self.params[off..off + d * d_in];
                let a = &self.params[off + d * d_in..off + d * d_in + 2 * d];
                let mut dz = vec![vec![0.0; d]; n];
                let mut da = vec![0.0; 2 * d];
                for i in 0..n {
                    let nb = &adj.neighbors[i];
                    if nb.is_empty() {
                        continue;
                    }
                    let alpha = &ht.alpha[i];
                    let mut dalpha = Vec::with_capacity(nb.len());
                    for (&j, &al) in nb.iter().zip(alpha) {
                        let src_idx = if self.aggregate_neighbors { j } else { i };
                        dalpha.push(dot(&dm[i], &ht.z[src_idx]));
                        for (g, &x) in dz[src_idx].iter_mut().zip(&dm[i]) {
                            *g += al * x;
                        }
                    }
                    let mean: f64 = alpha.iter().zip(&dalpha).map(|(a, b)| a * b).sum();
                    for (idx, &j) in nb.iter().enumerate() {
                        let ds = alpha[idx] * (dalpha[idx] - mean) * leaky_relu_grad(ht.s[i][idx]);
                        if ds == 0.0 {
                            continue;
                        }
                        for o in 0..d {
                            da[o] += ds * ht.z[i][o];
                            da[d + o] += ds * ht.z[j][o];
                            dz[i][o] += ds * a[o];
                            dz[j][o] += ds * a[d + o];
                        }
                    }
                }
                let (gw, ga) = grads[off..off + d * d_in + 2 * d].split_at_mut(d * d_in);
                for (g, x) in ga.iter_mut().zip(&da) {
                    *g += x;
                }
                for i in 0..n {
                    let h = &lt.input[i];
                    for o in 0..d {
                        let g = dz[i][o];
                        if g == 0.0 {
                            continue;
                        }
                        for (gwi, &hi) in gw[o * d_in..(o + 1) * d_in].iter_mut().zip(h) {
                            *gwi += g * hi;
                        }
                        for (dhi, &wi) in dh[i].iter_mut().zip(&w[o * d_in..(o + 1) * d_in]) {
                            *dhi += g * wi;
                        }
                    }
                }
            }
            delta = dh;
        }
        Ok(delta)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
