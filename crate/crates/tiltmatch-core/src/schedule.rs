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

//! Interpolant schedules `I_t = alpha_t x0 + beta_t x1` and the induced
//! diffusion coefficient.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::axpy;

/// Boundary tolerance for schedule construction: `alpha(0)=1`, `beta(1)=1`,
/// `alpha(1)=0`, `beta(0)=0`.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Training samples draw `t` uniformly on `[TIME_EPS, 1 - TIME_EPS]` to stay
/// clear of the `sigma_t^2` singularity at `t = 0` and the degenerate
/// conditional laws at the endpoints.
pub const TIME_EPS: f64 = 1e-4;

type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Time coefficients of a stochastic interpolant.
///
/// Only the linear schedule (`alpha = 1 - t`, `beta = t`) ships built in;
/// custom schedules supply closures for the coefficients and their
/// derivatives and must satisfy the boundary conditions at construction.
#[derive(Clone)]
pub enum InterpolantSchedule {
    Linear,
    Custom {
        alpha: TimeFn,
        beta: TimeFn,
        alpha_dot: TimeFn,
        beta_dot: TimeFn,
    },
}

impl core::fmt::Debug for InterpolantSchedule {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            InterpolantSchedule::Linear => write!(f, "InterpolantSchedule::Linear"),
            InterpolantSchedule::Custom { .. } => write!(f, "InterpolantSchedule::Custom"),
        }
    }
}

/// The linear interpolant `I_t = (1 - t) x0 + t x1`.
pub fn make_linear_schedule() -> InterpolantSchedule {
    InterpolantSchedule::Linear
}

impl InterpolantSchedule {
    /// Build a custom schedule, checking the boundary conditions.
    pub fn custom(
        alpha: TimeFn,
        beta: TimeFn,
        alpha_dot: TimeFn,
        beta_dot: TimeFn,
    ) -> Result<Self> {
        let checks = [
            (alpha(0.0) - 1.0, "alpha(0) = 1"),
            (beta(1.0) - 1.0, "beta(1) = 1"),
            (alpha(1.0), "alpha(1) = 0"),
            (beta(0.0), "beta(0) = 0"),
        ];
        for (residual, what) in checks {
            if residual.abs() >= BOUNDARY_TOL {
                return Err(Error::InvalidConfig(format!(
                    "schedule boundary condition {what} violated by {residual:e}"
                )));
            }
        }
        Ok(InterpolantSchedule::Custom { alpha, beta, alpha_dot, beta_dot })
    }

    pub fn alpha(&self, t: f64) -> f64 {
        match self {
            InterpolantSchedule::Linear => 1.0 - t,
            InterpolantSchedule::Custom { alpha, .. } => alpha(t),
        }
    }

    pub fn beta(&self, t: f64) -> f64 {
        match self {
            InterpolantSchedule::Linear => t,
            InterpolantSchedule::Custom { beta, .. } => beta(t),
        }
    }

    pub fn alpha_dot(&self, t: f64) -> f64 {
        match self {
            InterpolantSchedule::Linear => -1.0,
            InterpolantSchedule::Custom { alpha_dot, .. } => alpha_dot(t),
        }
    }

    pub fn beta_dot(&self, t: f64) -> f64 {
        match self {
            InterpolantSchedule::Linear => 1.0,
            InterpolantSchedule::Custom { beta_dot, .. } => beta_dot(t),
        }
    }

    /// `(alpha, beta, alpha_dot, beta_dot)` at `t`.
    pub fn coeffs(&self, t: f64) -> (f64, f64, f64, f64) {
        (self.alpha(t), self.beta(t), self.alpha_dot(t), self.beta_dot(t))
    }
}

/// Diffusion coefficient `sigma_t^2 = 2 [ (beta_dot / beta) alpha^2 - alpha_dot alpha ]`.
///
/// This is the schedule for which the conditional endpoint laws of the
/// reference SDE match those of the interpolant, making the tilted velocity
/// field the probability-flow drift of the Doob-transformed diffusion. For
/// the linear schedule it reduces to `sigma_t^2 = 2 (1 - t) / t`.
pub fn sigma_squared(schedule: &InterpolantSchedule, t: f64) -> Result<f64> {
    let beta = schedule.beta(t);
    if beta == 0.0 || !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("sigma_squared requires beta(t) > 0, got t = {t}")));
    }
    let alpha = schedule.alpha(t);
    Ok(2.0 * ((schedule.beta_dot(t) / beta) * alpha * alpha - schedule.alpha_dot(t) * alpha))
}

/// One interpolant draw with its time-derivative and endpoint reward.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolantSample {
    pub t: f64,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    /// `alpha_t x0 + beta_t x1`
    pub i: Vec<f64>,
    /// `alpha_dot_t x0 + beta_dot_t x1`
    pub i_dot: Vec<f64>,
    /// `r(x1)`
    pub reward: f64,
}

/// Construct the interpolant point and derivative for a coupled draw.
pub fn sample_interpolant(
    schedule: &InterpolantSchedule,
    x0: &[f64],
    x1: &[f64],
    t: f64,
    reward_fn: &dyn Fn(&[f64]) -> f64,
) -> Result<InterpolantSample> {
    if x0.len() != x1.len() {
        return Err(Error::DimensionMismatch { expected: x0.len(), got: x1.len() });
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, 1]")));
    }
    let (alpha, beta, alpha_dot, beta_dot) = schedule.coeffs(t);
    let i = axpy(&x0.iter().map(|v| alpha * v).collect::<Vec<_>>(), beta, x1);
    let i_dot = axpy(&x0.iter().map(|v| alpha_dot * v).collect::<Vec<_>>(), beta_dot, x1);
    let reward = reward_fn(x1);
    Ok(InterpolantSample { t, x0: x0.to_vec(), x1: x1.to_vec(), i, i_dot, reward })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn linear_boundaries() {
        let s = make_linear_schedule();
        assert_eq!(s.alpha(0.0), 1.0);
        assert_eq!(s.beta(0.0), 0.0);
        assert_eq!(s.alpha(1.0), 0.0);
        assert_eq!(s.beta(1.0), 1.0);
        assert_eq!(s.coeffs(0.25), (0.75, 0.25, -1.0, 1.0));
    }

    #[test]
    fn linear_sigma_squared_values() {
        let s = make_linear_schedule();
        // closed form 2 (1 - t) / t, confirmed symbolically
        assert!((sigma_squared(&s, 0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!((sigma_squared(&s, 0.25).unwrap() - 6.0).abs() < 1e-15);
        assert!(sigma_squared(&s, 1.0).unwrap().abs() < 1e-15);
        assert!(sigma_squared(&s, 0.0).is_err());
    }

    #[test]
    fn interpolant_sample_affine() {
        let s = make_linear_schedule();
        let r = |_: &[f64]| 0.0;
        let smp = sample_interpolant(&s, &[0.0], &[2.0], 0.5, &r).unwrap();
        assert_eq!(smp.i, vec![1.0]);
        assert_eq!(smp.i_dot, vec![2.0]);

        // fixed point of interpolation
        let c = [1.25, -0.5];
        let smp = sample_interpolant(&s, &c, &c, 0.37, &r).unwrap();
        for (a, b) in smp.i.iter().zip(&c) {
            assert!((a - b).abs() < 1e-15);
        }

        let smp = sample_interpolant(&s, &[1.0, 0.0], &[0.0, 1.0], 0.3, &r).unwrap();
        assert!((smp.i[0] - 0.7).abs() < 1e-15 && (smp.i[1] - 0.3).abs() < 1e-15);
        assert_eq!(smp.i_dot, vec![-1.0, 1.0]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let s = make_linear_schedule();
        let r = |_: &[f64]| 0.0;
        assert!(sample_interpolant(&s, &[0.0], &[1.0, 2.0], 0.5, &r).is_err());
    }

    #[test]
    fn custom_schedule_boundary_enforced() {
        let bad = InterpolantSchedule::custom(
            Arc::new(|t| 1.0 - t * t),
            Arc::new(|t| t),
            Arc::new(|t| -2.0 * t),
            Arc::new(|_| 1.0),
        );
        assert!(bad.is_ok()); // 1 - t^2 satisfies the boundary values
        let worse = InterpolantSchedule::custom(
            Arc::new(|t| 0.9 - t),
            Arc::new(|t| t),
            Arc::new(|_| -1.0),
            Arc::new(|_| 1.0),
        );
        assert!(worse.is_err());
    }
}
