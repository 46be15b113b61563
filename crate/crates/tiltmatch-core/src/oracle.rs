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

//! Independent ground-truth estimators used only by tests and diagnostics.
//!
//! Two conditioning mechanisms realize `E[ · | I_t = x]`:
//!
//! * exact Gaussian conditional sampling (no kernels, for the Gaussian
//!   family), and
//! * self-normalized Gaussian-kernel weighting over a coupled endpoint
//!   buffer (dimension <= 2).
//!
//! Every estimator reports a delta-method standard error, and comparisons
//! against closed forms are always made in 3-sigma bands. None of these
//! functions accepts a trainable model: probe fields enter as plain
//! closures.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::gaussian::GaussianProblem;
use crate::linalg::norm;
use crate::rng::Rng;
use crate::schedule::InterpolantSchedule;

/// Threshold below which an estimate is flagged low-confidence.
pub const MIN_EFFECTIVE_SAMPLES: f64 = 30.0;

/// A Monte Carlo conditional estimate with its uncertainty.
#[derive(Debug, Clone)]
pub struct ConditionalEstimate {
    pub value: Vec<f64>,
    pub std_error: Vec<f64>,
    pub n_effective: f64,
    pub low_confidence: bool,
}

impl ConditionalEstimate {
    fn new(value: Vec<f64>, std_error: Vec<f64>, n_effective: f64) -> Self {
        let low_confidence = n_effective < MIN_EFFECTIVE_SAMPLES;
        Self { value, std_error, n_effective, low_confidence }
    }

    /// `|value - reference|` in units of the standard error, maximized over
    /// coordinates.
    pub fn sigma_distance(&self, reference: &[f64]) -> f64 {
        self.value
            .iter()
            .zip(reference)
            .zip(&self.std_error)
            .map(|((v, r), se)| (v - r).abs() / se.max(1e-300))
            .fold(0.0, f64::max)
    }
}

/// A scalar probe field `(t, x) -> R^d` given to oracles as a closed form.
pub type FieldFn<'a> = &'a dyn Fn(f64, &[f64]) -> Vec<f64>;

// ---------------------------------------------------------------------------
// Exact-conditional estimators (Gaussian family)
// ---------------------------------------------------------------------------

/// Self-normalized estimate of the Esscher ratio
/// `E[I_dot e^{h r} | I^a = x] / E[e^{h r} | I^a = x]`, the velocity at
/// level `a + h` expressed with level-`a` samples.
pub fn esscher_velocity_mc(
    problem: &GaussianProblem,
    t: f64,
    x: &[f64],
    a: f64,
    h: f64,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<ConditionalEstimate> {
    let cond = problem.conditional(t, x, a)?;
    let d = x.len();
    let mut idots = Vec::with_capacity(n_samples);
    let mut weights = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let draw = cond.sample(rng);
        let w = (h * problem.reward.eval(&draw.x1)).exp();
        if !w.is_finite() {
            return Err(Error::NonFinite(String::from("esscher weight overflow")));
        }
        weights.push(w);
        idots.push(draw.i_dot);
    }
    Ok(self_normalized_ratio(&idots, &weights, d))
}

/// `Cov(I_dot, r(x1) | I^a = x)`, the right-hand side of the tilt evolution
/// equation, estimated with exact conditional draws.
pub fn covariance_rhs_mc(
    problem: &GaussianProblem,
    t: f64,
    x: &[f64],
    a: f64,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<ConditionalEstimate> {
    let cond = problem.conditional(t, x, a)?;
    let d = x.len();
    let mut idots = Vec::with_capacity(n_samples);
    let mut rewards = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let draw = cond.sample(rng);
        rewards.push(problem.reward.eval(&draw.x1));
        idots.push(draw.i_dot);
    }
    Ok(centered_product_estimate(&idots, &rewards, 1, d))
}

/// Joint conditional cumulant `kappa(I_dot, r, ..., r | I^a = x)` with
/// `order` copies of the reward (order <= 3), via centered-moment formulas.
pub fn joint_cumulant_mc(
    problem: &GaussianProblem,
    t: f64,
    x: &[f64],
    a: f64,
    order: usize,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<ConditionalEstimate> {
    if !(1..=3).contains(&order) {
        return Err(Error::Unsupported(format!("cumulant order {order} not in 1..=3")));
    }
    let cond = problem.conditional(t, x, a)?;
    let d = x.len();
    let mut idots = Vec::with_capacity(n_samples);
    let mut rewards = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let draw = cond.sample(rng);
        rewards.push(problem.reward.eval(&draw.x1));
        idots.push(draw.i_dot);
    }
    Ok(centered_product_estimate(&idots, &rewards, order, d))
}

/// `v_{t,a}(x) = log E[e^{a r(x1)} | I_t^0 = x]` by exact level-0
/// conditional sampling; the returned estimate is scalar.
pub fn value_function_mc(
    problem: &GaussianProblem,
    t: f64,
    x: &[f64],
    a: f64,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<ConditionalEstimate> {
    let cond = problem.conditional(t, x, 0.0)?;
    let mut ws = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let draw = cond.sample(rng);
        let w = (a * problem.reward.eval(&draw.x1)).exp();
        if !w.is_finite() {
            return Err(Error::NonFinite(String::from("value-function weight overflow")));
        }
        ws.push(w);
    }
    let (m, se) = crate::stats::mean_se(&ws);
    Ok(ConditionalEstimate::new(
        vec![m.ln()],
        vec![se / m],
        n_samples as f64,
    ))
}

/// Residual of the Doob probability-flow identity
/// `|b_{t,a}(x) - b_{t,0}(x) - (sigma_t^2 / 2) grad v_{t,a}(x)|`, all terms
/// analytic. `sigma2_scale = 1` is the matching diffusion coefficient;
/// other values are negative controls.
pub fn doob_identity_check(
    problem: &GaussianProblem,
    t: f64,
    x: &[f64],
    a: f64,
    sigma2_scale: f64,
) -> Result<f64> {
    problem.doob_residual(t, x, a, sigma2_scale)
}

/// Monte Carlo estimate of the ITM functional gradient at a probe point:
/// `2 E[(b_hat(x) - b_a(x)) + (e^{hr} - 1)(b_hat(x) - I_dot) | I^a = x]`.
/// Vanishes (to MC error) iff `b_hat(x) = b_{t,a+h}(x)`.
pub fn itm_gradient_mc(
    problem: &GaussianProblem,
    t: f64,
    x: &[f64],
    a: f64,
    h: f64,
    b_hat: FieldFn<'_>,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<ConditionalEstimate> {
    let cond = problem.conditional(t, x, a)?;
    let d = x.len();
    let bh = b_hat(t, x);
    let ba = problem.velocity(t, x, a)?;
    let mut terms: Vec<Vec<f64>> = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let draw = cond.sample(rng);
        let w = (h * problem.reward.eval(&draw.x1)).exp();
        terms.push(
            (0..d)
                .map(|j| 2.0 * ((bh[j] - ba[j]) + (w - 1.0) * (bh[j] - draw.i_dot[j])))
                .collect(),
        );
    }
    Ok(vector_mean_estimate(&terms, d, n_samples as f64))
}

/// First-order optimality residual `E[e^{hr} (b_hat(x) - I_dot) | I^a = x]`.
pub fn optimality_residual_mc(
    problem: &GaussianProblem,
    t: f64,
    x: &[f64],
    a: f64,
    h: f64,
    b_hat: FieldFn<'_>,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<ConditionalEstimate> {
    let cond = problem.conditional(t, x, a)?;
    let d = x.len();
    let bh = b_hat(t, x);
    let mut terms: Vec<Vec<f64>> = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let draw = cond.sample(rng);
        let w = (h * problem.reward.eval(&draw.x1)).exp();
        terms.push((0..d).map(|j| w * (bh[j] - draw.i_dot[j])).collect());
    }
    Ok(vector_mean_estimate(&terms, d, n_samples as f64))
}

// ---------------------------------------------------------------------------
// Kernel-conditioned estimators (coupled buffers, dim <= 2)
// ---------------------------------------------------------------------------

/// Coupled endpoint draws `(x0, x1)` with precomputed rewards, the raw
/// material for kernel conditioning at arbitrary `t`.
#[derive(Debug, Clone, Default)]
pub struct CoupledBuffer {
    pub x0: Vec<Vec<f64>>,
    pub x1: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

impl CoupledBuffer {
    pub fn len(&self) -> usize {
        self.x0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x0.is_empty()
    }
}

/// Default kernel bandwidth: `0.1` times the per-coordinate standard
/// deviation of the interpolant points, averaged over coordinates.
pub fn default_bandwidth(points: &[Vec<f64>]) -> f64 {
    let d = points[0].len();
    let n = points.len() as f64;
    let mut acc = 0.0;
    for j in 0..d {
        let mean = points.iter().map(|p| p[j]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[j] - mean) * (p[j] - mean)).sum::<f64>() / n;
        acc += var.sqrt();
    }
    0.1 * acc / d as f64
}

/// Kernel-weighted Esscher ratio over a coupled buffer.
pub fn esscher_velocity_kernel(
    schedule: &InterpolantSchedule,
    buffer: &CoupledBuffer,
    t: f64,
    x: &[f64],
    h: f64,
    bandwidth: f64,
) -> Result<ConditionalEstimate> {
    let d = x.len();
    if d > 2 {
        return Err(Error::Unsupported(String::from(
            "kernel conditioning degrades above dimension 2",
        )));
    }
    if buffer.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (alpha, beta, alpha_dot, beta_dot) = schedule.coeffs(t);
    let inv2b2 = 1.0 / (2.0 * bandwidth * bandwidth);
    let mut idots = Vec::with_capacity(buffer.len());
    let mut weights = Vec::with_capacity(buffer.len());
    for k in 0..buffer.len() {
        let mut dist2 = 0.0;
        for j in 0..d {
            let i_j = alpha * buffer.x0[k][j] + beta * buffer.x1[k][j];
            let diff = i_j - x[j];
            dist2 += diff * diff;
        }
        let kern = (-dist2 * inv2b2).exp();
        let w = kern * (h * buffer.rewards[k]).exp();
        if !w.is_finite() {
            return Err(Error::NonFinite(String::from("kernel esscher weight overflow")));
        }
        weights.push(w);
        idots.push(
            (0..d)
                .map(|j| alpha_dot * buffer.x0[k][j] + beta_dot * buffer.x1[k][j])
                .collect(),
        );
    }
    Ok(self_normalized_ratio(&idots, &weights, d))
}

// ---------------------------------------------------------------------------
// Shared estimation kernels
// ---------------------------------------------------------------------------

fn self_normalized_ratio(
    values: &[Vec<f64>],
    weights: &[f64],
    d: usize,
) -> ConditionalEstimate {
    let sum_w: f64 = weights.iter().sum();
    let sum_w2: f64 = weights.iter().map(|w| w * w).sum();
    let n_eff = if sum_w2 > 0.0 { sum_w * sum_w / sum_w2 } else { 0.0 };
    let mut value = vec![0.0; d];
    for (v, w) in values.iter().zip(weights) {
        for j in 0..d {
            value[j] += w * v[j];
        }
    }
    for v in value.iter_mut() {
        *v /= sum_w;
    }
    // delta-method SE of the self-normalized ratio
    let mut se = vec![0.0; d];
    for (v, w) in values.iter().zip(weights) {
        for j in 0..d {
            let dev = w * (v[j] - value[j]);
            se[j] += dev * dev;
        }
    }
    for s in se.iter_mut() {
        *s = s.sqrt() / sum_w;
    }
    ConditionalEstimate::new(value, se, n_eff)
}

fn vector_mean_estimate(terms: &[Vec<f64>], d: usize, n_eff: f64) -> ConditionalEstimate {
    let n = terms.len() as f64;
    let mut mean = vec![0.0; d];
    for t in terms {
        for j in 0..d {
            mean[j] += t[j];
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut se = vec![0.0; d];
    for t in terms {
        for j in 0..d {
            let dev = t[j] - mean[j];
            se[j] += dev * dev;
        }
    }
    for s in se.iter_mut() {
        *s = (*s / (n - 1.0)).sqrt() / n.sqrt();
    }
    ConditionalEstimate::new(mean, se, n_eff)
}

/// Centered joint moment `E[(I_dot - mean)(r - mean)^order]` with the
/// fourth-cumulant correction at order 3.
fn centered_product_estimate(
    idots: &[Vec<f64>],
    rewards: &[f64],
    order: usize,
    d: usize,
) -> ConditionalEstimate {
    let n = rewards.len() as f64;
    let mut mean_idot = vec![0.0; d];
    for v in idots {
        for j in 0..d {
            mean_idot[j] += v[j];
        }
    }
    for m in mean_idot.iter_mut() {
        *m /= n;
    }
    let mean_r = rewards.iter().sum::<f64>() / n;
    let var_r = rewards.iter().map(|r| (r - mean_r) * (r - mean_r)).sum::<f64>() / n;
    let cov_ur: Vec<f64> = (0..d)
        .map(|j| {
            idots
                .iter()
                .zip(rewards)
                .map(|(v, r)| (v[j] - mean_idot[j]) * (r - mean_r))
                .sum::<f64>()
                / n
        })
        .collect();

    // influence terms per sample
    let mut terms: Vec<Vec<f64>> = Vec::with_capacity(rewards.len());
    for (v, r) in idots.iter().zip(rewards) {
        let rt = r - mean_r;
        let row: Vec<f64> = (0..d)
            .map(|j| {
                let ut = v[j] - mean_idot[j];
                match order {
                    1 => ut * rt,
                    2 => ut * rt * rt,
                    // kappa4 = E[u r^3] - 3 E[u r] E[r^2] (centered)
                    _ => ut * rt * rt * rt - 3.0 * (cov_ur[j] * rt * rt + var_r * ut * rt)
                        + 3.0 * cov_ur[j] * var_r,
                }
            })
            .collect();
        terms.push(row);
    }
    let mut est = vector_mean_estimate(&terms, d, n);
    if order == 3 {
        // the influence terms already subtract the product correction;
        // recentre the point estimate on the plug-in cumulant
        let k4: Vec<f64> = (0..d)
            .map(|j| {
                let m_ur3 = idots
                    .iter()
                    .zip(rewards)
                    .map(|(v, r)| (v[j] - mean_idot[j]) * (r - mean_r).powi(3))
                    .sum::<f64>()
                    / n;
                m_ur3 - 3.0 * cov_ur[j] * var_r
            })
            .collect();
        est.value = k4;
    }
    est
}

/// Norm of an estimate's value vector (handy for residual assertions).
pub fn estimate_norm(est: &ConditionalEstimate) -> f64 {
    norm(&est.value)
}
