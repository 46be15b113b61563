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

//! Error type shared across the crate.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by the tilt-matching primitives.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Vector or matrix dimensions do not agree.
    DimensionMismatch { expected: usize, got: usize },
    /// An argument is outside the function's domain (e.g. `t` with `beta(t)=0`).
    Domain(String),
    /// A schedule or configuration violates a construction invariant.
    InvalidConfig(String),
    /// A matrix that must be symmetric positive definite is not.
    NotPositiveDefinite(String),
    /// Energy evaluation diverged (coincident particles, etc.).
    DivergentEnergy(String),
    /// A numeric quantity became non-finite where finiteness is required.
    NonFinite(String),
    /// An operation was called on a backend that does not support it.
    Unsupported(String),
    /// An empty batch or sample set was supplied.
    EmptyBatch,
    /// A serialized blob is malformed or truncated.
    Codec(String),
    /// The anneal driver aborted (e.g. ESS collapsed below the hard floor).
    Aborted(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::NotPositiveDefinite(msg) => write!(f, "matrix not positive definite: {msg}"),
            Error::DivergentEnergy(msg) => write!(f, "divergent energy: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::Unsupported(msg) => write!(f, "unsupported operation: {msg}"),
            Error::EmptyBatch => write!(f, "empty batch"),
            Error::Codec(msg) => write!(f, "codec error: {msg}"),
            Error::Aborted(msg) => write!(f, "aborted: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
