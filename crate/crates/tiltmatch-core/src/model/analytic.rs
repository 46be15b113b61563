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

//! Exact tilted Gaussian velocity field as a (non-trainable) model backend.

use alloc::vec::Vec;

use crate::error::Result;
use crate::gaussian::GaussianProblem;
use crate::rng::Rng;
use crate::targets::GaussianTarget;

/// `b_{t,a}` for a fully Gaussian problem, frozen at tilt level `a`.
#[derive(Debug, Clone)]
pub struct GaussianField {
    problem: GaussianProblem,
    a: f64,
    /// Tilted endpoint `N(mu1(a), S1(a))`, cached for sampling.
    endpoint: GaussianTarget,
}

impl GaussianField {
    /// Build the exact field `b_{t,a}` for independent Gaussian endpoints
    /// and a linear (or quadratic/constant) reward.
    pub fn new(problem: GaussianProblem, a: f64) -> Result<Self> {
        let endpoint = problem.endpoint_at(a)?;
        // validate once so eval can be infallible
        let probe = alloc::vec![0.0; problem.dim()];
        problem.velocity(0.5, &probe, a)?;
        Ok(Self { problem, a, endpoint })
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    pub fn tilt_level(&self) -> f64 {
        self.a
    }

    pub fn problem(&self) -> &GaussianProblem {
        &self.problem
    }

    /// The tilted endpoint distribution this field transports to.
    pub fn endpoint(&self) -> &GaussianTarget {
        &self.endpoint
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self.problem
            .velocity(t, x, self.a)
            .expect("validated at construction")
    }

    /// Exact draw from the tilted endpoint.
    pub fn sample_endpoint(&self, rng: &mut Rng) -> Vec<f64> {
        self.endpoint.sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_matches_problem_velocity() {
        let p = GaussianProblem::standard_1d_linear();
        let f = GaussianField::new(p.clone(), 0.7).unwrap();
        for &(t, x) in &[(0.2, -1.0), (0.5, 0.0), (0.9, 2.0)] {
            assert_eq!(f.eval(t, &[x]), p.velocity(t, &[x], 0.7).unwrap());
        }
    }
}
