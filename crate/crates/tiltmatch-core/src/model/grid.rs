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

//! Dense velocity grid over `[0,1] x bounds` with multilinear
//! interpolation. Inputs outside the spatial bounds are clamped to the
//! boundary (flagged on evaluation).

use alloc::vec;
use alloc::vec::Vec;

/// Grid-backed velocity field. The trainable parameters are the node
/// values, laid out as `(t, x1, ..., xd, component)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    dim: usize,
    /// Number of knots along `t` (over `[0, 1]`).
    pub n_t: usize,
    /// Number of knots along each spatial axis.
    pub n_x: Vec<usize>,
    /// `(lo, hi)` per spatial axis.
    pub bounds: Vec<(f64, f64)>,
    pub(crate) values: Vec<f64>,
}

pub struct GridCache {
    /// Flat value offsets of the cell corners (component 0).
    corners: Vec<usize>,
    weights: Vec<f64>,
}

impl GridField {
    /// Zero-initialized grid.
    pub fn new(dim: usize, n_t: usize, n_x: Vec<usize>, bounds: Vec<(f64, f64)>) -> Self {
        assert_eq!(n_x.len(), dim);
        assert_eq!(bounds.len(), dim);
        assert!(n_t >= 2 && n_x.iter().all(|&n| n >= 2));
        let n_values = n_t * n_x.iter().product::<usize>() * dim;
        Self { dim, n_t, n_x, bounds, values: vec![0.0; n_values] }
    }

    /// Constant field (every node set to `v`).
    pub fn constant(dim: usize, n_t: usize, n_x: Vec<usize>, bounds: Vec<(f64, f64)>, v: &[f64]) -> Self {
        let mut g = Self::new(dim, n_t, n_x, bounds);
        for chunk in g.values.chunks_exact_mut(dim) {
            chunk.copy_from_slice(v);
        }
        g
    }

    pub fn from_parts(
        dim: usize,
        n_t: usize,
        n_x: Vec<usize>,
        bounds: Vec<(f64, f64)>,
        values: Vec<f64>,
    ) -> Option<Self> {
        if n_x.len() != dim || bounds.len() != dim {
            return None;
        }
        if values.len() != n_t * n_x.iter().product::<usize>() * dim {
            return None;
        }
        Some(Self { dim, n_t, n_x, bounds, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Axis coordinate -> (lower knot, fraction, clamped?).
    fn locate(coord: f64, lo: f64, hi: f64, n: usize) -> (usize, f64, bool) {
        let clamped = coord < lo || coord > hi;
        let c = coord.clamp(lo, hi);
        let u = (c - lo) / (hi - lo) * (n - 1) as f64;
        let i = (u as usize).min(n - 2);
        (i, u - i as f64, clamped)
    }

    pub fn forward(&self, t: f64, x: &[f64]) -> (Vec<f64>, GridCache) {
        debug_assert_eq!(x.len(), self.dim);
        let n_axes = 1 + self.dim;
        let mut base_idx = Vec::with_capacity(n_axes);
        let mut frac = Vec::with_capacity(n_axes);
        let mut flagged = false;
        {
            let (i, f, c) = Self::locate(t, 0.0, 1.0, self.n_t);
            base_idx.push(i);
            frac.push(f);
            flagged |= c;
        }
        for d in 0..self.dim {
            let (lo, hi) = self.bounds[d];
            let (i, f, c) = Self::locate(x[d], lo, hi, self.n_x[d]);
            base_idx.push(i);
            frac.push(f);
            flagged |= c;
        }
        let _ = flagged;

        // strides in node units
        let mut strides = vec![0usize; n_axes];
        let mut s = 1;
        for axis in (0..n_axes).rev() {
            strides[axis] = s;
            s *= if axis == 0 { self.n_t } else { self.n_x[axis - 1] };
        }

        let n_corners = 1usize << n_axes;
        let mut corners = Vec::with_capacity(n_corners);
        let mut weights = Vec::with_capacity(n_corners);
        let mut out = vec![0.0; self.dim];
        for mask in 0..n_corners {
            let mut node = 0usize;
            let mut w = 1.0;
            for axis in 0..n_axes {
                let hi_side = (mask >> axis) & 1 == 1;
                let idx = base_idx[axis] + usize::from(hi_side);
                node += idx * strides[axis];
                w *= if hi_side { frac[axis] } else { 1.0 - frac[axis] };
            }
            let off = node * self.dim;
            corners.push(off);
            weights.push(w);
            if w != 0.0 {
                for c in 0..self.dim {
                    out[c] += w * self.values[off + c];
                }
            }
        }
        (out, GridCache { corners, weights })
    }

    pub fn eval_flagged(&self, t: f64, x: &[f64]) -> (Vec<f64>, bool) {
        let in_t = (0.0..=1.0).contains(&t);
        let in_x = x
            .iter()
            .zip(&self.bounds)
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi);
        let (out, _) = self.forward(t, x);
        (out, !(in_t && in_x))
    }

    pub fn backprop(&self, cache: &GridCache, seed: &[f64], grad: &mut [f64]) {
        for (off, w) in cache.corners.iter().zip(&cache.weights) {
            if *w == 0.0 {
                continue;
            }
            for c in 0..self.dim {
                grad[off + c] += w * seed[c];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_grid_is_constant() {
        let g = GridField::constant(2, 5, vec![4, 4], vec![(-1.0, 1.0), (-1.0, 1.0)], &[0.3, -0.7]);
        for &(t, x, y) in &[(0.0, -1.0, -1.0), (0.5, 0.2, -0.9), (1.0, 1.0, 1.0)] {
            let (v, flag) = g.eval_flagged(t, &[x, y]);
            assert!(!flag);
            assert!((v[0] - 0.3).abs() < 1e-15 && (v[1] + 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn out_of_bounds_clamps_and_flags() {
        let mut g = GridField::new(1, 3, vec![3], vec![(-1.0, 1.0)]);
        // set node values to x coordinate: -1, 0, 1 at every t
        for it in 0..3 {
            for ix in 0..3 {
                g.values[(it * 3 + ix) * 1] = -1.0 + ix as f64;
            }
        }
        let (v, flag) = g.eval_flagged(0.5, &[5.0]);
        assert!(flag);
        assert!((v[0] - 1.0).abs() < 1e-15, "clamped to boundary value");
        let (_, flag) = g.eval_flagged(0.5, &[0.5]);
        assert!(!flag);
    }

    #[test]
    fn interpolation_is_exact_for_multilinear_fields() {
        // field(t, x) = 2t + 3x - 1 is reproduced exactly by the grid
        let mut g = GridField::new(1, 4, vec![5], vec![(-2.0, 2.0)]);
        for it in 0..4 {
            let t = it as f64 / 3.0;
            for ix in 0..5 {
                let x = -2.0 + ix as f64;
                g.values[it * 5 + ix] = 2.0 * t + 3.0 * x - 1.0;
            }
        }
        for &(t, x) in &[(0.1, -1.3), (0.77, 0.4), (0.5, 1.9)] {
            let (v, _) = g.eval_flagged(t, &[x]);
            assert!((v[0] - (2.0 * t + 3.0 * x - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut g = GridField::new(1, 3, vec![3], vec![(-1.0, 1.0)]);
        for (i, v) in g.values.iter_mut().enumerate() {
            *v = (i as f64) * 0.1 - 0.4;
        }
        let (t, x) = (0.3, [0.4]);
        let (out, cache) = g.forward(t, &x);
        let seed = [2.0 * out[0]]; // loss = out^2
        let mut grad = vec![0.0; g.values.len()];
        g.backprop(&cache, &seed, &mut grad);
        let eps = 1e-6;
        for i in 0..g.values.len() {
            let orig = g.values[i];
            g.values[i] = orig + eps;
            let lp = g.forward(t, &x).0[0].powi(2);
            g.values[i] = orig - eps;
            let lm = g.forward(t, &x).0[0].powi(2);
            g.values[i] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            assert!((grad[i] - fd).abs() < 1e-7, "{} vs {fd}", grad[i]);
        }
    }
}
