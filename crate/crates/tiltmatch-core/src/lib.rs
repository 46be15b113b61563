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

//! Tilt matching: iterative regression of stochastic-interpolant velocity
//! fields toward exponentially reward-tilted targets.
//!
//! Given a velocity field `b_{t,a}` that transports a base density to the
//! endpoint density `rho_{1,a} ∝ rho_1 · exp(a·r)`, the losses in
//! [`losses`] regress the field at tilt level `a + h` from samples drawn at
//! level `a`, without backpropagating through trajectories and without
//! spatial gradients of the reward. The [`anneal`] driver iterates these
//! updates from `a = 0` to `a = 1`; [`sampler`] integrates the learned ODE,
//! computes likelihoods and importance weights, and runs MALA refinement;
//! [`oracle`] holds independent Monte Carlo ground-truth estimators used
//! only by tests and diagnostics.
//!
//! The crate is `no_std`-compatible (`alloc` required); disable the default
//! `std` feature for embedded or wasm use. All arithmetic is `f64`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod anneal;
pub mod error;
pub mod gaussian;
pub mod linalg;
pub mod losses;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod stats;
pub mod targets;

pub use error::{Error, Result};
pub use schedule::{InterpolantSample, InterpolantSchedule};
