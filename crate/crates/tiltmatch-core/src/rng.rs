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

//! Deterministic random-number streams.
//!
//! Every stochastic component derives a named substream from a single master
//! seed, so runs are reproducible bit-for-bit regardless of how the work is
//! scheduled. Streams are ChaCha8; normal variates use Box-Muller.

use alloc::vec::Vec;
use num_traits::Float;
use rand_core::{RngCore, SeedableRng};

/// splitmix64 finalizer; used to derive stream seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_name(name: &str) -> u64 {
    // FNV-1a over the stream name.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Derives named, indexed substreams from a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFactory {
    master: u64,
}

impl StreamFactory {
    pub fn new(master_seed: u64) -> Self {
        Self { master: master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master
    }

    /// A fresh generator for `(name, index)`. The same pair always yields
    /// the identical stream.
    pub fn stream(&self, name: &str, index: u64) -> Rng {
        let mut state = self
            .master
            .wrapping_add(hash_name(name))
            .wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        Rng {
            inner: rand_chacha::ChaCha8Rng::from_seed(seed),
            spare_normal: None,
        }
    }
}

/// A deterministic generator with uniform and normal draws.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: rand_chacha::ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Rng {
    /// Standalone generator from a seed (tests and one-off sampling).
    pub fn from_seed(seed: u64) -> Self {
        StreamFactory::new(seed).stream("standalone", 0)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Modulo bias is far below anything the f64 statistics can resolve.
        (self.inner.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box-Muller, caching the spare draw.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Rademacher ±1.
    pub fn rademacher(&mut self) -> f64 {
        if self.inner.next_u64() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}
