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

//! Closed-form tilted velocity fields for Gaussian endpoints.
//!
//! With `x0 ~ N(mu0, S0)`, `x1^a ~ N(mu1(a), S1(a))` independent and
//! `I = alpha x0 + beta x1`, conditioning on `I = x` is plain Gaussian
//! algebra:
//!
//! ```text
//! M      = alpha^2 S0 + beta^2 S1
//! E[x1|I=x] = mu1 + beta S1 M^-1 (x - alpha mu0 - beta mu1)
//! E[x0|I=x] = mu0 + alpha S0 M^-1 (x - alpha mu0 - beta mu1)
//! b_{t,a}(x) = alpha_dot E[x0|I=x] + beta_dot E[x1|I=x]
//! ```
//!
//! The tilted endpoint parameters come from completing the square on
//! `rho_1 e^{a r}` (see [`crate::targets::gaussian_tilted_params`]). Tilt
//! derivatives follow from Gaussian moment identities:
//! `d b/da = Cov(I_dot, r | I = x) = C (c - Q m1)` and
//! `d^2 b/da^2 = kappa(I_dot, r, r | I = x) = -2 C Q V1 (c - Q m1)`,
//! where `C = Cov(I_dot, x1 | I = x)` and `V1 = Var(x1 | I = x)`. These
//! identities were cross-checked against symbolic differentiation of the
//! closed-form field.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Mat};
use crate::rng::Rng;
use crate::schedule::{sigma_squared, InterpolantSchedule};
use crate::targets::{gaussian_tilted_params, GaussianTarget, Reward};

/// A fully Gaussian tilt problem: Gaussian base and endpoint with a linear,
/// quadratic, or constant reward.
#[derive(Debug, Clone)]
pub struct GaussianProblem {
    pub schedule: InterpolantSchedule,
    pub base: GaussianTarget,
    pub endpoint: GaussianTarget,
    pub reward: Reward,
}

/// Conditional law of `(x0, x1^a)` given `I_t^a = x`, with everything the
/// oracles need precomputed.
#[derive(Debug, Clone)]
pub struct GaussianConditional {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_dot: f64,
    pub beta_dot: f64,
    /// `E[x0 | I = x]`
    pub m0: Vec<f64>,
    /// `E[x1 | I = x]`
    pub m1: Vec<f64>,
    /// `Var(x1 | I = x)`
    pub v1: Mat,
    v1_chol: Option<Mat>,
    /// `Cov(x0, x1 | I = x)`
    pub cov01: Mat,
    /// `b_{t,a}(x) = alpha_dot m0 + beta_dot m1`
    pub velocity: Vec<f64>,
}

/// One draw from the conditional coupling.
#[derive(Debug, Clone)]
pub struct ConditionalDraw {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub i_dot: Vec<f64>,
}

impl GaussianConditional {
    /// `Cov(I_dot, x1 | I = x) = alpha_dot Cov(x0, x1 | I) + beta_dot V1`.
    pub fn cov_idot_x1(&self) -> Mat {
        self.cov01.scale(self.alpha_dot).add_scaled(&self.v1, self.beta_dot)
    }

    pub fn sample(&self, rng: &mut Rng) -> ConditionalDraw {
        let d = self.m1.len();
        let x1 = match &self.v1_chol {
            Some(l) => {
                let z = rng.normal_vec(d);
                let mut x = self.m1.clone();
                for i in 0..d {
                    for k in 0..=i {
                        x[i] += l.at(i, k) * z[k];
                    }
                }
                x
            }
            // degenerate (t = 1): x1 is pinned
            None => self.m1.clone(),
        };
        // alpha x0 = x - beta x1, and x = alpha m0 + beta m1 identically.
        let x0: Vec<f64> = if self.alpha.abs() > 1e-14 {
            (0..d)
                .map(|i| {
                    (self.alpha * self.m0[i] + self.beta * (self.m1[i] - x1[i])) / self.alpha
                })
                .collect()
        } else {
            // interpolant pins x1 only; x0 is a fresh base draw handled by
            // the caller via conditional_at_t1
            self.m0.clone()
        };
        let i_dot: Vec<f64> = (0..d)
            .map(|i| self.alpha_dot * x0[i] + self.beta_dot * x1[i])
            .collect();
        ConditionalDraw { x0, x1, i_dot }
    }
}

impl GaussianProblem {
    /// The desk-scale reference problem: `rho_0 = rho_1 = N(0,1)` in one
    /// dimension with reward `r(x) = x`.
    pub fn standard_1d_linear() -> Self {
        Self {
            schedule: InterpolantSchedule::Linear,
            base: GaussianTarget::standard(1),
            endpoint: GaussianTarget::standard(1),
            reward: Reward::Linear { c: vec![1.0] },
        }
    }

    /// Same endpoints with the quadratic reward `r(x) = -x^2/2`, the
    /// simplest case in which the velocity field is genuinely nonlinear in
    /// the tilt level (all higher tilt cumulants are nonzero).
    pub fn standard_1d_quadratic() -> Self {
        Self {
            schedule: InterpolantSchedule::Linear,
            base: GaussianTarget::standard(1),
            endpoint: GaussianTarget::standard(1),
            reward: Reward::Quadratic { q: Mat::identity(1), c: vec![0.0] },
        }
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Tilted endpoint `N(mu1(a), S1(a))`.
    pub fn endpoint_at(&self, a: f64) -> Result<GaussianTarget> {
        let (mu, sigma) =
            gaussian_tilted_params(&self.endpoint.mu, &self.endpoint.sigma, &self.reward, a)?;
        GaussianTarget::new(mu, sigma)
    }

    /// Conditional law of the coupling given `I_t^a = x`.
    pub fn conditional(&self, t: f64, x: &[f64], a: f64) -> Result<GaussianConditional> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        let ep = self.endpoint_at(a)?;
        let (alpha, beta, alpha_dot, beta_dot) = self.schedule.coeffs(t);
        let s0 = &self.base.sigma;
        let s1 = &ep.sigma;
        let m = s0.scale(alpha * alpha).add_scaled(s1, beta * beta);
        let m_chol = m.cholesky()?;
        let delta: Vec<f64> = (0..d)
            .map(|i| x[i] - alpha * self.base.mu[i] - beta * ep.mu[i])
            .collect();
        let minv_delta = Mat::chol_solve(&m_chol, &delta);
        let s1_minv_delta = s1.matvec(&minv_delta);
        let s0_minv_delta = s0.matvec(&minv_delta);
        let m1: Vec<f64> = (0..d).map(|i| ep.mu[i] + beta * s1_minv_delta[i]).collect();
        let m0: Vec<f64> = (0..d).map(|i| self.base.mu[i] + alpha * s0_minv_delta[i]).collect();

        let minv = m.spd_inverse()?;
        // V1 = S1 - beta^2 S1 M^-1 S1
        let s1_minv = s1.matmul(&minv);
        let v1 = s1.add_scaled(&s1_minv.matmul(s1), -(beta * beta));
        // Cov(x0, x1 | I) = -alpha beta S0 M^-1 S1
        let cov01 = s0.matmul(&minv).matmul(s1).scale(-alpha * beta);
        let v1_chol = v1.cholesky().ok();

        let velocity: Vec<f64> =
            (0..d).map(|i| alpha_dot * m0[i] + beta_dot * m1[i]).collect();
        Ok(GaussianConditional {
            alpha,
            beta,
            alpha_dot,
            beta_dot,
            m0,
            m1,
            v1,
            v1_chol,
            cov01,
            velocity,
        })
    }

    /// The tilted velocity field `b_{t,a}(x)`.
    pub fn velocity(&self, t: f64, x: &[f64], a: f64) -> Result<Vec<f64>> {
        Ok(self.conditional(t, x, a)?.velocity)
    }

    /// Reward gradient coefficient `g = c - Q m1` of the conditional
    /// endpoint; `None` entries of the pair mean zero.
    fn reward_coeffs(&self) -> Result<(Option<Mat>, Vec<f64>)> {
        match &self.reward {
            Reward::Linear { c } => Ok((None, c.clone())),
            Reward::Quadratic { q, c } => Ok((Some(q.clone()), c.clone())),
            Reward::Constant(_) => Ok((None, vec![0.0; self.dim()])),
            Reward::EnergyDifference { .. } => Err(Error::Unsupported(String::from(
                "analytic Gaussian requires a linear, quadratic, or constant reward",
            ))),
        }
    }

    /// `d b_{t,a}(x) / d a = Cov(I_dot, r(x1) | I = x)`, in closed form.
    pub fn velocity_da(&self, t: f64, x: &[f64], a: f64) -> Result<Vec<f64>> {
        let (q, c) = self.reward_coeffs()?;
        let cond = self.conditional(t, x, a)?;
        let g: Vec<f64> = match &q {
            Some(qm) => {
                let qm1 = qm.matvec(&cond.m1);
                c.iter().zip(&qm1).map(|(ci, qi)| ci - qi).collect()
            }
            None => c,
        };
        Ok(cond.cov_idot_x1().matvec(&g))
    }

    /// `d^2 b_{t,a}(x) / d a^2`, the third joint cumulant
    /// `kappa(I_dot, r, r | I = x)`. Zero for linear and constant rewards.
    pub fn velocity_da2(&self, t: f64, x: &[f64], a: f64) -> Result<Vec<f64>> {
        let (q, c) = self.reward_coeffs()?;
        let d = self.dim();
        let Some(qm) = q else {
            return Ok(vec![0.0; d]);
        };
        let cond = self.conditional(t, x, a)?;
        let qm1 = qm.matvec(&cond.m1);
        let g: Vec<f64> = c.iter().zip(&qm1).map(|(ci, qi)| ci - qi).collect();
        // kappa = -2 C Q V1 g
        let v1g = cond.v1.matvec(&g);
        let qv1g = qm.matvec(&v1g);
        Ok(cond.cov_idot_x1().matvec(&qv1g).iter().map(|v| -2.0 * v).collect())
    }

    /// Value function `v_{t,a}(x) = log E[e^{a r(x1)} | I_t^0 = x]`
    /// (log-MGF of the level-0 conditional endpoint). Linear and constant
    /// rewards only.
    pub fn value_function(&self, t: f64, x: &[f64], a: f64) -> Result<f64> {
        match &self.reward {
            Reward::Constant(v) => Ok(a * v),
            Reward::Linear { c } => {
                let cond = self.conditional(t, x, 0.0)?;
                let v1c = cond.v1.matvec(c);
                Ok(a * dot(c, &cond.m1) + 0.5 * a * a * dot(c, &v1c))
            }
            _ => Err(Error::Unsupported(String::from(
                "closed-form value function implemented for linear rewards",
            ))),
        }
    }

    /// `grad_x v_{t,a}(x)`; for linear rewards this is
    /// `a beta M^-1 S1 c`, independent of `x`.
    pub fn value_gradient(&self, t: f64, x: &[f64], a: f64) -> Result<Vec<f64>> {
        match &self.reward {
            Reward::Constant(_) => Ok(vec![0.0; self.dim()]),
            Reward::Linear { c } => {
                let (alpha, beta, _, _) = self.schedule.coeffs(t);
                let s0 = &self.base.sigma;
                let s1 = &self.endpoint.sigma;
                let m = s0.scale(alpha * alpha).add_scaled(s1, beta * beta);
                let m_chol = m.cholesky()?;
                let s1c = s1.matvec(c);
                let minv_s1c = Mat::chol_solve(&m_chol, &s1c);
                let _ = x;
                Ok(minv_s1c.iter().map(|v| a * beta * v).collect())
            }
            _ => Err(Error::Unsupported(String::from(
                "closed-form value gradient implemented for linear rewards",
            ))),
        }
    }

    /// Residual of the Doob probability-flow identity
    /// `b_{t,a} = b_{t,0} + (sigma_t^2 / 2) grad v_{t,a}`, all terms
    /// analytic. `sigma2_scale` perturbs the diffusion coefficient for
    /// negative controls (1.0 = the matching schedule).
    pub fn doob_residual(&self, t: f64, x: &[f64], a: f64, sigma2_scale: f64) -> Result<f64> {
        let b_a = self.velocity(t, x, a)?;
        let b_0 = self.velocity(t, x, 0.0)?;
        let grad_v = self.value_gradient(t, x, a)?;
        let half_sigma2 = 0.5 * sigma2_scale * sigma_squared(&self.schedule, t)?;
        let resid: Vec<f64> = (0..self.dim())
            .map(|i| b_a[i] - b_0[i] - half_sigma2 * grad_v[i])
            .collect();
        Ok(norm(&resid))
    }
}
