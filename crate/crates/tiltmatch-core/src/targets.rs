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

//! Base and target distributions, reward functions, and energy-based
//! targets with the geometric annealing construction.
//!
//! The sampling problem is always phrased as: tilt an initial endpoint
//! density `rho_{1,0}` by `exp(a r(x))` and renormalize. For energy-based
//! targets the reward `r = E0 - E1` realizes the geometric path
//! `E_a = (1 - a) E0 + a E1`; a temperature-annealed prior uses
//! `E0 = E1 / T0`.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng::Rng;

/// Default temperature for temperature-annealed priors.
pub const DEFAULT_T0: f64 = 3.0;

// ---------------------------------------------------------------------------
// Rewards
// ---------------------------------------------------------------------------

/// Scalar reward defining the tilt `rho_{1,a} ∝ rho_1 e^{a r}`.
#[derive(Clone)]
pub enum Reward {
    /// `r(x) = c · x`
    Linear { c: Vec<f64> },
    /// `r(x) = -1/2 x'Qx + c·x`
    Quadratic { q: Mat, c: Vec<f64> },
    /// `r(x) = E0(x) - E1(x)`, the geometric annealing path applied to the
    /// prior `exp(-E0)`.
    EnergyDifference { e0: Arc<Target>, e1: Arc<Target> },
    /// Constant reward; tilting by it is pure renormalization.
    Constant(f64),
}

impl core::fmt::Debug for Reward {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Reward::Linear { c } => write!(f, "Reward::Linear({c:?})"),
            Reward::Quadratic { .. } => write!(f, "Reward::Quadratic"),
            Reward::EnergyDifference { .. } => write!(f, "Reward::EnergyDifference"),
            Reward::Constant(v) => write!(f, "Reward::Constant({v})"),
        }
    }
}

impl Reward {
    pub fn zero(dim: usize) -> Self {
        Reward::Linear { c: vec![0.0; dim] }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Reward::Linear { c } => crate::linalg::dot(c, x),
            Reward::Quadratic { q, c } => {
                let qx = q.matvec(x);
                -0.5 * crate::linalg::dot(x, &qx) + crate::linalg::dot(c, x)
            }
            Reward::EnergyDifference { e0, e1 } => e0.energy(x) - e1.energy(x),
            Reward::Constant(v) => *v,
        }
    }

    /// Spatial gradient of the reward, when the underlying energies have
    /// scores. Only used for MALA refinement, never by the losses.
    pub fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            Reward::Linear { c } => Some(c.clone()),
            Reward::Quadratic { q, c } => {
                let qx = q.matvec(x);
                Some(c.iter().zip(&qx).map(|(ci, qi)| ci - qi).collect())
            }
            Reward::EnergyDifference { e0, e1 } => {
                // r = E0 - E1 and score = -grad E.
                let s0 = e0.score(x)?;
                let s1 = e1.score(x)?;
                Some(s1.iter().zip(&s0).map(|(a, b)| a - b).collect())
            }
            Reward::Constant(_) => Some(vec![0.0; x.len()]),
        }
    }
}

/// Reward for the geometric annealing path: tilting `exp(-E0)` by
/// `exp(a (E0 - E1))` yields `exp(-E_a)` with `E_a = (1-a) E0 + a E1`.
pub fn geometric_path_reward(e0: Arc<Target>, e1: Arc<Target>) -> Reward {
    Reward::EnergyDifference { e0, e1 }
}

/// Temperature-annealed prior: `E0 = E1 / t0`, returning the prior target
/// and the geometric-path reward toward `E1`.
pub fn temperature_prior(target: Arc<Target>, t0: f64) -> (Arc<Target>, Reward) {
    let prior = Arc::new(Target::Tempered { inner: target.clone(), inv_temp: 1.0 / t0 });
    let reward = geometric_path_reward(prior.clone(), target);
    (prior, reward)
}

// ---------------------------------------------------------------------------
// Targets
// ---------------------------------------------------------------------------

/// Gaussian with full covariance; the analytically tractable family.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    pub mu: Vec<f64>,
    pub sigma: Mat,
    chol: Mat,
    sigma_inv: Mat,
    log_det: f64,
}

impl GaussianTarget {
    pub fn new(mu: Vec<f64>, sigma: Mat) -> Result<Self> {
        if mu.len() != sigma.n {
            return Err(Error::DimensionMismatch { expected: mu.len(), got: sigma.n });
        }
        if !sigma.is_symmetric(1e-12) {
            return Err(Error::NotPositiveDefinite(String::from("covariance not symmetric")));
        }
        let chol = sigma.cholesky()?;
        let sigma_inv = sigma.spd_inverse()?;
        let log_det = sigma.spd_log_det()?;
        Ok(Self { mu, sigma, chol, sigma_inv, log_det })
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(vec![0.0; dim], Mat::identity(dim)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Normalized log density.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.mu).map(|(a, b)| a - b).collect();
        let siv = self.sigma_inv.matvec(&d);
        let quad = crate::linalg::dot(&d, &siv);
        -0.5 * (quad + self.log_det + self.dim() as f64 * (2.0 * core::f64::consts::PI).ln())
    }

    pub fn score(&self, x: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = x.iter().zip(&self.mu).map(|(a, b)| a - b).collect();
        self.sigma_inv.matvec(&d).iter().map(|v| -v).collect()
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        let z = rng.normal_vec(self.dim());
        let mut x = self.mu.clone();
        for i in 0..self.dim() {
            for k in 0..=i {
                x[i] += self.chol.at(i, k) * z[k];
            }
        }
        x
    }
}

/// Lennard-Jones cluster parameters. Energies use the pair form
/// `eps/(2 tau) * sum_{i != j} [ (r_m/d)^6 - (r_m/d)^12 ]` over ordered
/// pairs (the 1/2 absorbs double counting), optionally plus the harmonic
/// confinement `1/2 sum_i |x_i - xbar|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LennardJonesSpec {
    pub n_particles: usize,
    pub epsilon: f64,
    pub r_m: f64,
    pub tau: f64,
    pub harmonic: bool,
}

impl LennardJonesSpec {
    pub fn lj13() -> Self {
        Self { n_particles: 13, epsilon: 2.0, r_m: 1.0, tau: 1.0, harmonic: true }
    }

    pub fn dim(&self) -> usize {
        3 * self.n_particles
    }
}

/// Total energy of a configuration `x` laid out as `n x 3` row-major.
pub fn lj_energy(spec: &LennardJonesSpec, x: &[f64]) -> Result<f64> {
    let n = spec.n_particles;
    if x.len() != 3 * n {
        return Err(Error::DimensionMismatch { expected: 3 * n, got: x.len() });
    }
    let k = spec.epsilon / spec.tau; // unordered-pair prefactor: eps/(2 tau) doubled
    let mut e = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[3 * i] - x[3 * j];
            let dy = x[3 * i + 1] - x[3 * j + 1];
            let dz = x[3 * i + 2] - x[3 * j + 2];
            let d2 = dx * dx + dy * dy + dz * dz;
            if d2 == 0.0 {
                return Err(Error::DivergentEnergy(format!(
                    "particles {i} and {j} coincide"
                )));
            }
            let s2 = spec.r_m * spec.r_m / d2;
            let s6 = s2 * s2 * s2;
            e += k * (s6 - s6 * s6);
        }
    }
    if spec.harmonic {
        let mut com = [0.0; 3];
        for i in 0..n {
            com[0] += x[3 * i];
            com[1] += x[3 * i + 1];
            com[2] += x[3 * i + 2];
        }
        for c in &mut com {
            *c /= n as f64;
        }
        for i in 0..n {
            let dx = x[3 * i] - com[0];
            let dy = x[3 * i + 1] - com[1];
            let dz = x[3 * i + 2] - com[2];
            e += 0.5 * (dx * dx + dy * dy + dz * dz);
        }
    }
    if !e.is_finite() {
        return Err(Error::DivergentEnergy(String::from("non-finite energy")));
    }
    Ok(e)
}

fn lj_grad(spec: &LennardJonesSpec, x: &[f64]) -> Result<Vec<f64>> {
    let n = spec.n_particles;
    if x.len() != 3 * n {
        return Err(Error::DimensionMismatch { expected: 3 * n, got: x.len() });
    }
    let k = spec.epsilon / spec.tau;
    let rm2 = spec.r_m * spec.r_m;
    let mut g = vec![0.0; 3 * n];
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[3 * i] - x[3 * j];
            let dy = x[3 * i + 1] - x[3 * j + 1];
            let dz = x[3 * i + 2] - x[3 * j + 2];
            let d2 = dx * dx + dy * dy + dz * dz;
            if d2 == 0.0 {
                return Err(Error::DivergentEnergy(format!(
                    "particles {i} and {j} coincide"
                )));
            }
            let s2 = rm2 / d2;
            let s6 = s2 * s2 * s2;
            // d/d(d2) of (s6 - s12) = (-3 s6 + 6 s12) / d2
            let dfdd2 = k * (-3.0 * s6 + 6.0 * s6 * s6) / d2;
            let (gx, gy, gz) = (2.0 * dfdd2 * dx, 2.0 * dfdd2 * dy, 2.0 * dfdd2 * dz);
            g[3 * i] += gx;
            g[3 * i + 1] += gy;
            g[3 * i + 2] += gz;
            g[3 * j] -= gx;
            g[3 * j + 1] -= gy;
            g[3 * j + 2] -= gz;
        }
    }
    if spec.harmonic {
        let mut com = [0.0; 3];
        for i in 0..n {
            com[0] += x[3 * i];
            com[1] += x[3 * i + 1];
            com[2] += x[3 * i + 2];
        }
        for c in &mut com {
            *c /= n as f64;
        }
        for i in 0..n {
            g[3 * i] += x[3 * i] - com[0];
            g[3 * i + 1] += x[3 * i + 1] - com[1];
            g[3 * i + 2] += x[3 * i + 2] - com[2];
        }
    }
    Ok(g)
}

/// A 2D Gaussian mixture with equally weighted isotropic modes on a circle.
#[derive(Debug, Clone)]
pub struct GmmTarget {
    pub modes: Vec<[f64; 2]>,
    pub var: f64,
}

impl GmmTarget {
    pub fn on_circle(n_modes: usize, radius: f64, var: f64) -> Self {
        let modes = (0..n_modes)
            .map(|k| {
                let th = 2.0 * core::f64::consts::PI * k as f64 / n_modes as f64;
                [radius * th.cos(), radius * th.sin()]
            })
            .collect();
        Self { modes, var }
    }

    fn log_density_unnorm(&self, x: &[f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        let mut terms = Vec::with_capacity(self.modes.len());
        for m in &self.modes {
            let dx = x[0] - m[0];
            let dy = x[1] - m[1];
            let t = -(dx * dx + dy * dy) / (2.0 * self.var);
            if t > max {
                max = t;
            }
            terms.push(t);
        }
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    }

    fn score(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = Vec::with_capacity(self.modes.len());
        let mut max = f64::NEG_INFINITY;
        for m in &self.modes {
            let dx = x[0] - m[0];
            let dy = x[1] - m[1];
            let t = -(dx * dx + dy * dy) / (2.0 * self.var);
            if t > max {
                max = t;
            }
            ws.push(t);
        }
        let mut z = 0.0;
        for w in &mut ws {
            *w = (*w - max).exp();
            z += *w;
        }
        let mut g = vec![0.0; 2];
        for (w, m) in ws.iter().zip(&self.modes) {
            let p = w / z;
            g[0] += p * (m[0] - x[0]) / self.var;
            g[1] += p * (m[1] - x[1]) / self.var;
        }
        g
    }

    fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        let k = rng.below(self.modes.len());
        let sd = self.var.sqrt();
        vec![
            self.modes[k][0] + sd * rng.normal(),
            self.modes[k][1] + sd * rng.normal(),
        ]
    }
}

/// One-dimensional double well `exp(-(x^2 - 1)^2 / 0.5)` with a table-based
/// inverse-CDF sampler.
#[derive(Debug, Clone)]
pub struct DoubleWellTarget {
    cdf_grid: Vec<f64>,
    cdf: Vec<f64>,
}

const DW_RANGE: f64 = 3.0;
const DW_TABLE: usize = 4096;

impl DoubleWellTarget {
    pub fn new() -> Self {
        // Trapezoid CDF table over [-3, 3]; mass outside is below 1e-60.
        let n = DW_TABLE;
        let mut grid = Vec::with_capacity(n + 1);
        let mut dens = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let x = -DW_RANGE + 2.0 * DW_RANGE * i as f64 / n as f64;
            grid.push(x);
            dens.push(Self::log_density_unnorm_static(x).exp());
        }
        let h = 2.0 * DW_RANGE / n as f64;
        let mut cdf = Vec::with_capacity(n + 1);
        cdf.push(0.0);
        for i in 1..=n {
            cdf.push(cdf[i - 1] + 0.5 * h * (dens[i - 1] + dens[i]));
        }
        let total = cdf[n];
        for c in &mut cdf {
            *c /= total;
        }
        Self { cdf_grid: grid, cdf }
    }

    fn log_density_unnorm_static(x: f64) -> f64 {
        let q = x * x - 1.0;
        -(q * q) / 0.5
    }

    fn score(x: f64) -> f64 {
        -8.0 * x * (x * x - 1.0)
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        let u = rng.uniform();
        // binary search for the CDF bracket
        let mut lo = 0;
        let mut hi = self.cdf.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cdf[mid] <= u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let c0 = self.cdf[lo];
        let c1 = self.cdf[hi];
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.cdf_grid[lo] + frac * (self.cdf_grid[hi] - self.cdf_grid[lo])
    }
}

impl Default for DoubleWellTarget {
    fn default() -> Self {
        Self::new()
    }
}

/// An unnormalized density / energy with optional analytic structure.
#[derive(Debug, Clone)]
pub enum Target {
    Gaussian(GaussianTarget),
    GaussianMixture(GmmTarget),
    DoubleWell(DoubleWellTarget),
    LennardJones(LennardJonesSpec),
    /// `rho ∝ exp(-E_inner / T)`, i.e. the inner log-density scaled by `1/T`.
    Tempered { inner: Arc<Target>, inv_temp: f64 },
}

impl Target {
    pub fn standard_gaussian(dim: usize) -> Self {
        Target::Gaussian(GaussianTarget::standard(dim))
    }

    pub fn dim(&self) -> usize {
        match self {
            Target::Gaussian(g) => g.dim(),
            Target::GaussianMixture(_) => 2,
            Target::DoubleWell(_) => 1,
            Target::LennardJones(spec) => spec.dim(),
            Target::Tempered { inner, .. } => inner.dim(),
        }
    }

    /// Unnormalized log density (normalized for the Gaussian).
    pub fn log_density_unnorm(&self, x: &[f64]) -> f64 {
        match self {
            Target::Gaussian(g) => g.log_density(x),
            Target::GaussianMixture(g) => g.log_density_unnorm(x),
            Target::DoubleWell(_) => DoubleWellTarget::log_density_unnorm_static(x[0]),
            Target::LennardJones(spec) => match lj_energy(spec, x) {
                Ok(e) => -e,
                Err(_) => f64::NEG_INFINITY,
            },
            Target::Tempered { inner, inv_temp } => inv_temp * inner.log_density_unnorm(x),
        }
    }

    /// Energy `E = -log rho` (up to the normalizing constant).
    pub fn energy(&self, x: &[f64]) -> f64 {
        -self.log_density_unnorm(x)
    }

    /// `grad log rho`, available for every built-in target.
    pub fn score(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            Target::Gaussian(g) => Some(g.score(x)),
            Target::GaussianMixture(g) => Some(g.score(x)),
            Target::DoubleWell(_) => Some(vec![DoubleWellTarget::score(x[0])]),
            Target::LennardJones(spec) => {
                lj_grad(spec, x).ok().map(|g| g.iter().map(|v| -v).collect())
            }
            Target::Tempered { inner, inv_temp } => {
                inner.score(x).map(|s| s.iter().map(|v| inv_temp * v).collect())
            }
        }
    }

    /// Exact sampler, when one exists.
    pub fn sample_exact(&self, rng: &mut Rng) -> Option<Vec<f64>> {
        match self {
            Target::Gaussian(g) => Some(g.sample(rng)),
            Target::GaussianMixture(g) => Some(g.sample(rng)),
            Target::DoubleWell(dw) => Some(vec![dw.sample(rng)]),
            Target::LennardJones(_) | Target::Tempered { .. } => None,
        }
    }

    pub fn has_exact_sampler(&self) -> bool {
        !matches!(self, Target::LennardJones(_) | Target::Tempered { .. })
    }
}

/// Tilted endpoint density `rho_{1,a} ∝ rho_1 exp(a r)`; the object MALA
/// refinement and importance weighting work against.
#[derive(Clone)]
pub struct Tilted {
    pub base: Arc<Target>,
    pub reward: Arc<Reward>,
    pub a: f64,
}

impl Tilted {
    pub fn new(base: Arc<Target>, reward: Arc<Reward>, a: f64) -> Self {
        Self { base, reward, a }
    }

    pub fn log_density_unnorm(&self, x: &[f64]) -> f64 {
        self.base.log_density_unnorm(x) + self.a * self.reward.eval(x)
    }

    pub fn score(&self, x: &[f64]) -> Option<Vec<f64>> {
        let s = self.base.score(x)?;
        let g = self.reward.grad(x)?;
        Some(s.iter().zip(&g).map(|(a, b)| a + self.a * b).collect())
    }
}

/// Exact parameters of a Gaussian tilted by `exp(a r)` for linear or
/// quadratic rewards: `Sigma' = (Sigma^-1 + a Q)^-1`,
/// `mu' = Sigma' (Sigma^-1 mu + a c)`. Used as the analytic oracle
/// everywhere the Gaussian family appears.
pub fn gaussian_tilted_params(
    mu: &[f64],
    sigma: &Mat,
    reward: &Reward,
    a: f64,
) -> Result<(Vec<f64>, Mat)> {
    let d = mu.len();
    if sigma.n != d {
        return Err(Error::DimensionMismatch { expected: d, got: sigma.n });
    }
    let (q, c): (Mat, Vec<f64>) = match reward {
        Reward::Linear { c } => (Mat::zeros(d), c.clone()),
        Reward::Quadratic { q, c } => (q.clone(), c.clone()),
        Reward::Constant(_) => (Mat::zeros(d), vec![0.0; d]),
        Reward::EnergyDifference { .. } => {
            return Err(Error::Unsupported(String::from(
                "gaussian_tilted_params requires a linear or quadratic reward",
            )))
        }
    };
    if c.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: c.len() });
    }
    let sigma_inv = sigma.spd_inverse()?;
    let precision = sigma_inv.add_scaled(&q, a);
    let sigma_tilted = precision.spd_inverse().map_err(|_| {
        Error::NotPositiveDefinite(format!(
            "Sigma^-1 + a Q is not positive definite at tilt a = {a}"
        ))
    })?;
    let rhs: Vec<f64> = sigma_inv
        .matvec(mu)
        .iter()
        .zip(&c)
        .map(|(u, v)| u + a * v)
        .collect();
    let mu_tilted = sigma_tilted.matvec(&rhs);
    Ok((mu_tilted, sigma_tilted))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_score(t: &Target, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (t.log_density_unnorm(&xp) - t.log_density_unnorm(&xm)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn scores_match_finite_differences() {
        let mut rng = Rng::from_seed(3);
        let targets: Vec<Target> = vec![
            Target::standard_gaussian(2),
            Target::Gaussian(
                GaussianTarget::new(
                    vec![0.3, -0.7],
                    Mat::from_rows(&[&[1.5, 0.4], &[0.4, 0.8]]),
                )
                .unwrap(),
            ),
            Target::GaussianMixture(GmmTarget::on_circle(4, 1.5, 0.25)),
            Target::DoubleWell(DoubleWellTarget::new()),
            Target::Tempered {
                inner: Arc::new(Target::GaussianMixture(GmmTarget::on_circle(3, 1.0, 0.3))),
                inv_temp: 1.0 / 3.0,
            },
        ];
        for t in &targets {
            for _ in 0..32 {
                let x: Vec<f64> = (0..t.dim()).map(|_| 2.0 * rng.normal()).collect();
                let s = t.score(&x).unwrap();
                let fd = fd_score(t, &x);
                for (a, b) in s.iter().zip(&fd) {
                    assert!(
                        (a - b).abs() <= 1e-5 * (1.0 + b.abs()),
                        "score mismatch {a} vs {b} for {t:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn lj_score_matches_finite_differences() {
        let spec = LennardJonesSpec { n_particles: 3, ..LennardJonesSpec::lj13() };
        let t = Target::LennardJones(spec);
        let mut rng = Rng::from_seed(9);
        for _ in 0..32 {
            // well-separated random configuration
            let x: Vec<f64> = (0..9).map(|i| (i as f64) * 0.9 + 0.2 * rng.normal()).collect();
            let s = t.score(&x).unwrap();
            let fd = fd_score(&t, &x);
            for (a, b) in s.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-4 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn lj_pair_examples() {
        let spec = LennardJonesSpec {
            n_particles: 2,
            epsilon: 2.0,
            r_m: 1.0,
            tau: 1.0,
            harmonic: false,
        };
        // equilibrium distance zeroes the bracket
        let e = lj_energy(&spec, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(e.abs() < 1e-15, "{e}");
        // both powers vanish at large separation
        let e = lj_energy(&spec, &[0.0, 0.0, 0.0, 1e6, 0.0, 0.0]).unwrap();
        assert!(e.abs() < 1e-12, "{e}");
        // coincident particles diverge
        assert!(matches!(
            lj_energy(&spec, &[0.0; 6]),
            Err(Error::DivergentEnergy(_))
        ));
    }

    #[test]
    fn lj_translation_and_permutation_invariance() {
        let spec = LennardJonesSpec { n_particles: 5, ..LennardJonesSpec::lj13() };
        let mut rng = Rng::from_seed(21);
        for _ in 0..10 {
            let x: Vec<f64> = (0..15).map(|i| (i % 5) as f64 + 0.3 * rng.normal()).collect();
            let e = lj_energy(&spec, &x).unwrap();

            let shift = [rng.normal(), rng.normal(), rng.normal()];
            let moved: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(i, v)| v + shift[i % 3])
                .collect();
            assert!((lj_energy(&spec, &moved).unwrap() - e).abs() < 1e-10);

            // random permutation of particle labels (Fisher-Yates)
            let mut perm: Vec<usize> = (0..5).collect();
            for i in (1..5).rev() {
                let j = rng.below(i + 1);
                perm.swap(i, j);
            }
            let mut shuffled = vec![0.0; 15];
            for (new_i, &old_i) in perm.iter().enumerate() {
                shuffled[3 * new_i..3 * new_i + 3]
                    .copy_from_slice(&x[3 * old_i..3 * old_i + 3]);
            }
            assert!((lj_energy(&spec, &shuffled).unwrap() - e).abs() < 1e-10);
        }
    }

    #[test]
    fn geometric_path_identity() {
        // -[(1-a) E0 + a E1] == -E0 + a r with r = E0 - E1, pointwise.
        let e1 = Arc::new(Target::GaussianMixture(GmmTarget::on_circle(4, 1.5, 0.3)));
        let e0 = Arc::new(Target::Tempered { inner: e1.clone(), inv_temp: 0.5 });
        let r = geometric_path_reward(e0.clone(), e1.clone());
        let mut rng = Rng::from_seed(5);
        for &a in &[0.0, 0.25, 0.5, 1.0] {
            for _ in 0..16 {
                let x = [2.0 * rng.normal(), 2.0 * rng.normal()];
                let lhs = -((1.0 - a) * e0.energy(&x) + a * e1.energy(&x));
                let rhs = -e0.energy(&x) + a * r.eval(&x);
                assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn temperature_prior_tilts_to_unit_temperature() {
        // E1(x) = x^2/2 (standard Gaussian), T0 = 3: at a = 1 the tilted
        // density is the unit-temperature N(0,1) again.
        let e1 = Arc::new(Target::standard_gaussian(1));
        let (prior, reward) = temperature_prior(e1.clone(), 3.0);
        let tilted = Tilted::new(prior, Arc::new(reward), 1.0);
        for &x in &[-2.0, -0.5, 0.0, 1.0, 2.5] {
            let diff = tilted.log_density_unnorm(&[x]) - e1.log_density_unnorm(&[x]);
            let diff0 = tilted.log_density_unnorm(&[0.0]) - e1.log_density_unnorm(&[0.0]);
            assert!((diff - diff0).abs() < 1e-12, "log-density shapes differ");
        }
    }

    #[test]
    fn tilted_gaussian_closed_forms() {
        // mu=0, Sigma=1, r(x)=x, a=1 -> N(1,1)
        let (mu, sig) = gaussian_tilted_params(
            &[0.0],
            &Mat::identity(1),
            &Reward::Linear { c: vec![1.0] },
            1.0,
        )
        .unwrap();
        assert!((mu[0] - 1.0).abs() < 1e-14);
        assert!((sig.at(0, 0) - 1.0).abs() < 1e-14);

        // a=0 leaves parameters unchanged
        let (mu, sig) = gaussian_tilted_params(
            &[0.4],
            &Mat::scaled_identity(1, 2.0),
            &Reward::Linear { c: vec![3.0] },
            0.0,
        )
        .unwrap();
        assert!((mu[0] - 0.4).abs() < 1e-14);
        assert!((sig.at(0, 0) - 2.0).abs() < 1e-14);

        // r(x) = -x^2/2, a=1 -> N(0, 1/2)
        let (mu, sig) = gaussian_tilted_params(
            &[0.0],
            &Mat::identity(1),
            &Reward::Quadratic { q: Mat::identity(1), c: vec![0.0] },
            1.0,
        )
        .unwrap();
        assert!(mu[0].abs() < 1e-14);
        assert!((sig.at(0, 0) - 0.5).abs() < 1e-14);

        // invalid tilt strength flagged
        let bad = gaussian_tilted_params(
            &[0.0],
            &Mat::identity(1),
            &Reward::Quadratic { q: Mat::scaled_identity(1, -2.0), c: vec![0.0] },
            1.0,
        );
        assert!(matches!(bad, Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn double_well_sampler_matches_density() {
        let dw = DoubleWellTarget::new();
        let mut rng = Rng::from_seed(17);
        let n = 50_000;
        let xs: Vec<f64> = (0..n).map(|_| dw.sample(&mut rng)).collect();
        // symmetric density: mean 0; both wells populated
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        let frac_pos = xs.iter().filter(|v| **v > 0.0).count() as f64 / n as f64;
        assert!((frac_pos - 0.5).abs() < 0.02, "{frac_pos}");
        // second moment against quadrature
        let (mut z, mut m2, mut h) = (0.0, 0.0, 6.0 / 20_000.0);
        for i in 0..=20_000 {
            let x = -3.0 + i as f64 * h;
            let w = if i == 0 || i == 20_000 { 0.5 } else { 1.0 };
            let p = DoubleWellTarget::log_density_unnorm_static(x).exp();
            z += w * p;
            m2 += w * p * x * x;
        }
        h *= 1.0; // trapezoid weights already applied
        let m2 = m2 / z;
        let emp_m2 = xs.iter().map(|v| v * v).sum::<f64>() / n as f64;
        assert!((emp_m2 - m2).abs() < 0.01, "{emp_m2} vs {m2}");
    }
}
