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

//! Parametric velocity fields `b(t, x)` with three backends: the exact
//! Gaussian field, a dense interpolation grid, and a small fully-connected
//! network with hand-rolled reverse-mode gradients.
//!
//! Evaluation on an immutable model is thread-safe; training mutates a
//! single flat parameter vector through [`Adam`].

mod analytic;
mod checkpoint;
mod grid;
mod mlp;

pub use analytic::GaussianField;
pub use checkpoint::{decode_checkpoint, encode_checkpoint};
pub use grid::GridField;
pub use mlp::MlpField;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{Error, Result};

/// Scalar loss value with the gradient aligned to the trainee's flat
/// parameter vector, plus batch diagnostics.
#[derive(Debug, Clone)]
pub struct GradientReport {
    pub loss_value: f64,
    pub grad: Vec<f64>,
    /// Mean of the per-sample functional-gradient seeds (`d` entries);
    /// vanishes at a fixed point of the objective.
    pub seed_mean: Vec<f64>,
    /// Number of samples whose `h * r` hit the exponent clamp.
    pub clip_count: u64,
}

/// Backend-agnostic forward cache consumed by `backprop`.
pub enum EvalCache {
    None,
    Grid(grid::GridCache),
    Mlp(mlp::MlpCache),
}

/// A velocity field `b(t, x)` with one of three backends.
#[derive(Debug, Clone)]
pub enum VelocityModel {
    /// Exact tilted Gaussian field; no trainable parameters.
    AnalyticGaussian(GaussianField),
    /// Dense multilinear-interpolation grid over `[0,1] x bounds`.
    Grid(GridField),
    /// Fully-connected network on `(x, [t, sin 2pi t, cos 2pi t])` with a
    /// time-modulated linear bypass.
    Mlp(MlpField),
}

/// Bit-exact copy of a model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    params: Vec<f64>,
}

impl VelocityModel {
    pub fn dim(&self) -> usize {
        match self {
            VelocityModel::AnalyticGaussian(f) => f.dim(),
            VelocityModel::Grid(f) => f.dim(),
            VelocityModel::Mlp(f) => f.dim(),
        }
    }

    /// Evaluate the field; grid inputs outside the bounds are clamped.
    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self.eval_flagged(t, x).0
    }

    /// Evaluate and report whether the input was outside a grid's bounds
    /// (always `false` for the other backends).
    pub fn eval_flagged(&self, t: f64, x: &[f64]) -> (Vec<f64>, bool) {
        match self {
            VelocityModel::AnalyticGaussian(f) => (f.eval(t, x), false),
            VelocityModel::Grid(f) => f.eval_flagged(t, x),
            VelocityModel::Mlp(f) => (f.forward(t, x).0, false),
        }
    }

    /// Forward pass retaining what `backprop` needs.
    pub fn eval_cached(&self, t: f64, x: &[f64]) -> (Vec<f64>, EvalCache) {
        match self {
            VelocityModel::AnalyticGaussian(f) => (f.eval(t, x), EvalCache::None),
            VelocityModel::Grid(f) => {
                let (out, cache) = f.forward(t, x);
                (out, EvalCache::Grid(cache))
            }
            VelocityModel::Mlp(f) => {
                let (out, cache) = f.forward(t, x);
                (out, EvalCache::Mlp(cache))
            }
        }
    }

    /// Accumulate `d loss / d params` into `grad` given the upstream seed
    /// `d loss / d output`.
    pub fn backprop(&self, cache: &EvalCache, seed: &[f64], grad: &mut [f64]) {
        match (self, cache) {
            (VelocityModel::AnalyticGaussian(_), EvalCache::None) => {}
            (VelocityModel::Grid(f), EvalCache::Grid(c)) => f.backprop(c, seed, grad),
            (VelocityModel::Mlp(f), EvalCache::Mlp(c)) => f.backprop(c, seed, grad),
            _ => unreachable!("cache does not match backend"),
        }
    }

    pub fn param_len(&self) -> usize {
        match self {
            VelocityModel::AnalyticGaussian(_) => 0,
            VelocityModel::Grid(f) => f.values.len(),
            VelocityModel::Mlp(f) => f.params.len(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            VelocityModel::AnalyticGaussian(_) => &[],
            VelocityModel::Grid(f) => &f.values,
            VelocityModel::Mlp(f) => &f.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            VelocityModel::AnalyticGaussian(_) => &mut [],
            VelocityModel::Grid(f) => &mut f.values,
            VelocityModel::Mlp(f) => &mut f.params,
        }
    }

    pub fn is_trainable(&self) -> bool {
        self.param_len() > 0
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot { params: self.params().to_vec() }
    }

    pub fn restore(&mut self, snapshot: &Snapshot) -> Result<()> {
        let expected = self.param_len();
        if snapshot.params.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: snapshot.params.len() });
        }
        self.params_mut().copy_from_slice(&snapshot.params);
        Ok(())
    }

    /// A frozen deep copy, used as the per-level reference model.
    pub fn frozen_clone(&self) -> VelocityModel {
        self.clone()
    }
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    /// Defaults: lr 1e-3, betas (0.9, 0.999), eps 1e-8.
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// One update; rejects non-finite gradients without touching the
    /// parameters.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if grad.len() != params.len() || grad.len() != self.m.len() {
            return Err(Error::DimensionMismatch { expected: self.m.len(), got: grad.len() });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(String::from("gradient contains NaN or inf")));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Apply one optimizer update to a model from a computed gradient report.
pub fn train_step(
    model: &mut VelocityModel,
    report: &GradientReport,
    optimizer: &mut Adam,
) -> Result<()> {
    match model {
        VelocityModel::AnalyticGaussian(_) => Err(Error::Unsupported(String::from(
            "analytic backend has no trainable parameters",
        ))),
        VelocityModel::Grid(f) => optimizer.step(&mut f.values, &report.grad),
        VelocityModel::Mlp(f) => optimizer.step(&mut f.params, &report.grad),
    }
}
