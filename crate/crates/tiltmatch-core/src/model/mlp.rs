// Copyright 2026 the tiltmatch authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Small fully-connected velocity network with explicit reverse-mode
//! gradients.
//!
//! Input is `(x, temb)` with time embedded as `[t, sin 2pi t, cos 2pi t]`;
//! hidden layers use the smooth bounded activation `z / sqrt(1 + z^2)`.
//! A time-modulated linear bypass `out += s(temb) ⊙ x` (with `s` a small
//! one-hidden-layer head) lets the network represent fields with linear
//! growth in `x` exactly, which the saturating trunk cannot extrapolate.

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::rng::Rng;

/// Hidden width of the time-bypass head.
pub const BYPASS_HIDDEN: usize = 16;

const TEMB: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpField {
    dim: usize,
    out_dim: usize,
    /// Hidden layer widths of the trunk.
    hidden: Vec<usize>,
    /// Hidden width of the bypass head (0 disables the bypass).
    bypass_hidden: usize,
    /// Flat parameters: trunk `(W, b)` per layer, then bypass `(W1, b1, W2, b2)`.
    pub(crate) params: Vec<f64>,
}

/// Forward activations retained for the backward pass.
pub struct MlpCache {
    x: Vec<f64>,
    input: Vec<f64>,
    /// Post-activation values per hidden layer.
    h: Vec<Vec<f64>>,
    /// `1 / sqrt(1 + z^2)` per hidden unit (activation slope is its cube).
    s: Vec<Vec<f64>>,
    bypass_h: Vec<f64>,
    bypass_s: Vec<f64>,
    temb: [f64; 3],
}

#[inline]
fn isru(z: f64) -> (f64, f64) {
    let s = 1.0 / (1.0 + z * z).sqrt();
    (z * s, s)
}

impl MlpField {
    /// Default topology used across the crate: 3 hidden layers of 64 units.
    pub fn with_default_shape(dim: usize, rng: &mut Rng) -> Self {
        Self::new(dim, &[64, 64, 64], BYPASS_HIDDEN, rng)
    }

    pub fn new(dim: usize, hidden: &[usize], bypass_hidden: usize, rng: &mut Rng) -> Self {
        let mut field = Self {
            dim,
            out_dim: dim,
            hidden: hidden.to_vec(),
            bypass_hidden,
            params: vec![0.0; 0],
        };
        field.params = vec![0.0; field.count_params()];
        field.init(rng);
        field
    }

    /// Scalar-output head on the same `(x, temb)` input, used for learned
    /// control variates. No bypass.
    pub fn scalar_head(dim: usize, hidden: &[usize], rng: &mut Rng) -> Self {
        let mut field = Self {
            dim,
            out_dim: 1,
            hidden: hidden.to_vec(),
            bypass_hidden: 0,
            params: vec![0.0; 0],
        };
        field.params = vec![0.0; field.count_params()];
        field.init(rng);
        field
    }

    /// Reconstruct from a known shape and parameter vector (checkpoints).
    pub fn from_parts(dim: usize, hidden: Vec<usize>, bypass_hidden: usize, params: Vec<f64>) -> Option<Self> {
        let field = Self { dim, out_dim: dim, hidden, bypass_hidden, params };
        if field.params.len() == field.count_params() {
            Some(field)
        } else {
            None
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn bypass_hidden(&self) -> usize {
        self.bypass_hidden
    }

    /// Trunk layer sizes including input and output.
    fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(self.dim + TEMB);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(self.out_dim);
        sizes
    }

    fn count_params(&self) -> usize {
        let sizes = self.layer_sizes();
        let mut n = 0;
        for w in sizes.windows(2) {
            n += w[1] * w[0] + w[1];
        }
        if self.bypass_hidden > 0 {
            debug_assert_eq!(self.out_dim, self.dim, "bypass requires out_dim == dim");
            n += self.bypass_hidden * TEMB + self.bypass_hidden;
            n += self.dim * self.bypass_hidden + self.dim;
        }
        n
    }

    fn init(&mut self, rng: &mut Rng) {
        let sizes = self.layer_sizes();
        let mut off = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (1.0 / fan_in as f64).sqrt();
            for _ in 0..fan_out * fan_in {
                self.params[off] = scale * rng.normal();
                off += 1;
            }
            off += fan_out; // biases stay zero
        }
        if self.bypass_hidden > 0 {
            let scale = (1.0 / TEMB as f64).sqrt();
            for _ in 0..self.bypass_hidden * TEMB {
                self.params[off] = scale * rng.normal();
                off += 1;
            }
            off += self.bypass_hidden;
            // final bypass layer starts at zero so the bypass is initially off
            off += self.dim * self.bypass_hidden + self.dim;
        }
        debug_assert_eq!(off, self.params.len());
    }

    pub fn forward(&self, t: f64, x: &[f64]) -> (Vec<f64>, MlpCache) {
        debug_assert_eq!(x.len(), self.dim);
        let two_pi_t = 2.0 * core::f64::consts::PI * t;
        let temb = [t, two_pi_t.sin(), two_pi_t.cos()];
        let mut input = Vec::with_capacity(self.dim + TEMB);
        input.extend_from_slice(x);
        input.extend_from_slice(&temb);

        let sizes = self.layer_sizes();
        let n_layers = sizes.len() - 1;
        let mut h_all = Vec::with_capacity(self.hidden.len());
        let mut s_all = Vec::with_capacity(self.hidden.len());
        let mut cur = input.clone();
        let mut off = 0;
        let mut out = Vec::new();
        for l in 0..n_layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let w = &self.params[off..off + n_out * n_in];
            let b = &self.params[off + n_out * n_in..off + n_out * n_in + n_out];
            off += n_out * n_in + n_out;
            let mut z = vec![0.0; n_out];
            for i in 0..n_out {
                let row = &w[i * n_in..(i + 1) * n_in];
                let mut acc = b[i];
                for k in 0..n_in {
                    acc += row[k] * cur[k];
                }
                z[i] = acc;
            }
            if l + 1 < n_layers {
                let mut s = vec![0.0; n_out];
                for i in 0..n_out {
                    let (a, si) = isru(z[i]);
                    z[i] = a;
                    s[i] = si;
                }
                h_all.push(z.clone());
                s_all.push(s);
                cur = z;
            } else {
                out = z;
            }
        }

        let (mut bypass_h, mut bypass_s) = (Vec::new(), Vec::new());
        if self.bypass_hidden > 0 {
            let nb = self.bypass_hidden;
            let w1 = &self.params[off..off + nb * TEMB];
            let b1 = &self.params[off + nb * TEMB..off + nb * TEMB + nb];
            let off2 = off + nb * TEMB + nb;
            let w2 = &self.params[off2..off2 + self.dim * nb];
            let b2 = &self.params[off2 + self.dim * nb..off2 + self.dim * nb + self.dim];
            bypass_h = vec![0.0; nb];
            bypass_s = vec![0.0; nb];
            for i in 0..nb {
                let mut acc = b1[i];
                for k in 0..TEMB {
                    acc += w1[i * TEMB + k] * temb[k];
                }
                let (a, si) = isru(acc);
                bypass_h[i] = a;
                bypass_s[i] = si;
            }
            for i in 0..self.dim {
                let mut slope = b2[i];
                for k in 0..nb {
                    slope += w2[i * nb + k] * bypass_h[k];
                }
                out[i] += slope * x[i];
            }
        }

        (
            out,
            MlpCache {
                x: x.to_vec(),
                input,
                h: h_all,
                s: s_all,
                bypass_h,
                bypass_s,
                temb,
            },
        )
    }

    /// Accumulate parameter gradients for one sample given the seed
    /// `d loss / d out`.
    pub fn backprop(&self, cache: &MlpCache, seed: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(seed.len(), self.out_dim);
        debug_assert_eq!(grad.len(), self.params.len());
        let sizes = self.layer_sizes();
        let n_layers = sizes.len() - 1;

        // Offsets of each trunk layer in the flat vector.
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += sizes[l + 1] * sizes[l] + sizes[l + 1];
        }
        let bypass_off = off;

        // Output layer: delta = seed.
        let mut delta = seed.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let w = &self.params[offsets[l]..offsets[l] + n_out * n_in];
            let prev: &[f64] = if l == 0 { &cache.input } else { &cache.h[l - 1] };
            let gw = &mut grad[offsets[l]..offsets[l] + n_out * n_in + n_out];
            for i in 0..n_out {
                let di = delta[i];
                let row = &mut gw[i * n_in..(i + 1) * n_in];
                for k in 0..n_in {
                    row[k] += di * prev[k];
                }
            }
            for i in 0..n_out {
                gw[n_out * n_in + i] += delta[i];
            }
            if l == 0 {
                break;
            }
            // propagate to the previous activation and through the ISRU slope
            let mut next = vec![0.0; n_in];
            for i in 0..n_out {
                let di = delta[i];
                let row = &w[i * n_in..(i + 1) * n_in];
                for k in 0..n_in {
                    next[k] += di * row[k];
                }
            }
            let s = &cache.s[l - 1];
            for k in 0..n_in {
                let sk = s[k];
                next[k] *= sk * sk * sk;
            }
            delta = next;
        }

        if self.bypass_hidden > 0 {
            let nb = self.bypass_hidden;
            let w2_off = bypass_off + nb * TEMB + nb;
            let w2 = &self.params[w2_off..w2_off + self.dim * nb];
            // d loss / d slope_i = seed_i * x_i
            let mut dh = vec![0.0; nb];
            for i in 0..self.dim {
                let dslope = seed[i] * cache.x[i];
                let gw2 = &mut grad[w2_off + i * nb..w2_off + (i + 1) * nb];
                for k in 0..nb {
                    gw2[k] += dslope * cache.bypass_h[k];
                    dh[k] += dslope * w2[i * nb + k];
                }
                grad[w2_off + self.dim * nb + i] += dslope;
            }
            for k in 0..nb {
                let sk = cache.bypass_s[k];
                let dz = dh[k] * sk * sk * sk;
                for j in 0..TEMB {
                    grad[bypass_off + k * TEMB + j] += dz * cache.temb[j];
                }
                grad[bypass_off + nb * TEMB + k] += dz;
            }
        }
    }
}
