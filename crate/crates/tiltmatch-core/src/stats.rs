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

//! Shared statistics used by diagnostics and tests: moments, two-sample
//! Kolmogorov-Smirnov, bootstrap intervals, slope fits, sign tests.

use alloc::vec::Vec;
use num_traits::Float;

use crate::rng::Rng;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// `(mean, standard error of the mean)`.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let v = variance(xs);
    (m, (v / xs.len() as f64).sqrt())
}

/// Two-sample Kolmogorov-Smirnov statistic (1D).
pub fn ks2_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let (fa, fb);
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        fa = i as f64 / n as f64;
        fb = j as f64 / m as f64;
        d = d.max((fa - fb).abs());
    }
    d
}

/// Asymptotic p-value for the two-sample KS statistic.
pub fn ks2_p_value(d: f64, n: usize, m: usize) -> f64 {
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    let mut p = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = sign * (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        p += term;
        sign = -sign;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (2.0 * p).clamp(0.0, 1.0)
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    debug_assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Percentile bootstrap CI (95%) for `Var(a) - Var(b)` on paired samples.
pub fn bootstrap_var_diff_ci(
    a: &[f64],
    b: &[f64],
    n_boot: usize,
    rng: &mut Rng,
) -> (f64, f64) {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut diffs = Vec::with_capacity(n_boot);
    let mut ra = Vec::with_capacity(n);
    let mut rb = Vec::with_capacity(n);
    for _ in 0..n_boot {
        ra.clear();
        rb.clear();
        for _ in 0..n {
            let idx = rng.below(n);
            ra.push(a[idx]);
            rb.push(b[idx]);
        }
        diffs.push(variance(&ra) - variance(&rb));
    }
    diffs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let lo = diffs[(0.025 * n_boot as f64) as usize];
    let hi = diffs[((0.975 * n_boot as f64) as usize).min(n_boot - 1)];
    (lo, hi)
}

/// One-sided sign-test p-value: probability of `wins` or more successes out
/// of `n` fair coin flips.
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut p = 0.0;
    for k in wins..=n {
        p += binomial(n, k);
    }
    p / (2.0f64).powi(n as i32)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_identical_samples_high_p() {
        let mut rng = Rng::from_seed(4);
        let a = rng.normal_vec(2000);
        let b = rng.normal_vec(2000);
        let d = ks2_statistic(&a, &b);
        assert!(ks2_p_value(d, 2000, 2000) > 0.01);
    }

    #[test]
    fn ks_detects_shift() {
        let mut rng = Rng::from_seed(4);
        let a = rng.normal_vec(2000);
        let b: Vec<f64> = rng.normal_vec(2000).iter().map(|x| x + 0.5).collect();
        let d = ks2_statistic(&a, &b);
        assert!(ks2_p_value(d, 2000, 2000) < 1e-6);
    }

    #[test]
    fn slope_fit_recovers_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let (s, b) = fit_line(&xs, &ys);
        assert!((s - 3.0).abs() < 1e-12 && (b + 1.0).abs() < 1e-12);
    }

    #[test]
    fn sign_test_values() {
        assert!((sign_test_p(5, 5) - 1.0 / 32.0).abs() < 1e-12);
        assert!((sign_test_p(0, 5) - 1.0).abs() < 1e-12);
    }
}
