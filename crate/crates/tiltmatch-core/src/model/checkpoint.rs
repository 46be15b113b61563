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

//! Checkpoint byte layout for trainable models.
//!
//! All integers are unsigned 32-bit little-endian, all floats 64-bit
//! little-endian:
//!
//! ```text
//! u32 kind              1 = grid, 2 = mlp
//! u32 dim               spatial dimension d
//! u32 n_shape           number of shape entries that follow
//! u32 shape[n_shape]    grid: [n_t, n_x1, ..., n_xd]
//!                       mlp:  [n_hidden, h1, ..., h_n, bypass_hidden]
//! u32 n_params          number of trainable f64 values
//! f64 bounds[2d]        grid only: lo/hi per spatial axis
//! f64 params[n_params]  flat parameter vector
//! ```

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{GridField, MlpField, VelocityModel};

const KIND_GRID: u32 = 1;
const KIND_MLP: u32 = 2;

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        if end > self.buf.len() {
            return Err(Error::Codec(String::from("truncated checkpoint (u32)")));
        }
        let v = u32::from_le_bytes(self.buf[self.pos..end].try_into().unwrap());
        self.pos = end;
        Ok(v)
    }

    fn f64(&mut self) -> Result<f64> {
        let end = self.pos + 8;
        if end > self.buf.len() {
            return Err(Error::Codec(String::from("truncated checkpoint (f64)")));
        }
        let v = f64::from_le_bytes(self.buf[self.pos..end].try_into().unwrap());
        self.pos = end;
        Ok(v)
    }
}

/// Serialize a trainable model to the checkpoint byte layout.
pub fn encode_checkpoint(model: &VelocityModel) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    match model {
        VelocityModel::Grid(g) => {
            push_u32(&mut buf, KIND_GRID);
            push_u32(&mut buf, g.dim() as u32);
            push_u32(&mut buf, (1 + g.dim()) as u32);
            push_u32(&mut buf, g.n_t as u32);
            for &n in &g.n_x {
                push_u32(&mut buf, n as u32);
            }
            push_u32(&mut buf, g.values().len() as u32);
            for &(lo, hi) in &g.bounds {
                push_f64(&mut buf, lo);
                push_f64(&mut buf, hi);
            }
            for &v in g.values() {
                push_f64(&mut buf, v);
            }
        }
        VelocityModel::Mlp(m) => {
            push_u32(&mut buf, KIND_MLP);
            push_u32(&mut buf, m.dim() as u32);
            push_u32(&mut buf, (2 + m.hidden().len()) as u32);
            push_u32(&mut buf, m.hidden().len() as u32);
            for &h in m.hidden() {
                push_u32(&mut buf, h as u32);
            }
            push_u32(&mut buf, m.bypass_hidden() as u32);
            push_u32(&mut buf, model.params().len() as u32);
            for &v in model.params() {
                push_f64(&mut buf, v);
            }
        }
        VelocityModel::AnalyticGaussian(_) => {
            return Err(Error::Unsupported(String::from(
                "analytic fields are reconstructed from their problem, not checkpointed",
            )))
        }
    }
    Ok(buf)
}

/// Reconstruct a model from checkpoint bytes.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<VelocityModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let kind = r.u32()?;
    let dim = r.u32()? as usize;
    let n_shape = r.u32()? as usize;
    let mut shape = Vec::with_capacity(n_shape);
    for _ in 0..n_shape {
        shape.push(r.u32()? as usize);
    }
    match kind {
        KIND_GRID => {
            if shape.len() != 1 + dim {
                return Err(Error::Codec(String::from("grid shape entries != 1 + dim")));
            }
            let n_t = shape[0];
            let n_x = shape[1..].to_vec();
            let n_params = r.u32()? as usize;
            let mut bounds = Vec::with_capacity(dim);
            for _ in 0..dim {
                bounds.push((r.f64()?, r.f64()?));
            }
            let mut values = Vec::with_capacity(n_params);
            for _ in 0..n_params {
                values.push(r.f64()?);
            }
            GridField::from_parts(dim, n_t, n_x, bounds, values)
                .map(VelocityModel::Grid)
                .ok_or_else(|| Error::Codec(String::from("inconsistent grid checkpoint")))
        }
        KIND_MLP => {
            if shape.is_empty() {
                return Err(Error::Codec(String::from("missing mlp shape")));
            }
            let n_hidden = shape[0];
            if shape.len() != n_hidden + 2 {
                return Err(Error::Codec(String::from("mlp shape entries != n_hidden + 2")));
            }
            let hidden = shape[1..1 + n_hidden].to_vec();
            let bypass_hidden = shape[1 + n_hidden];
            let n_params = r.u32()? as usize;
            let mut params = Vec::with_capacity(n_params);
            for _ in 0..n_params {
                params.push(r.f64()?);
            }
            MlpField::from_parts(dim, hidden, bypass_hidden, params)
                .map(VelocityModel::Mlp)
                .ok_or_else(|| Error::Codec(String::from("inconsistent mlp checkpoint")))
        }
        other => Err(Error::Codec(alloc::format!("unknown backend kind {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn mlp_checkpoint_roundtrip_bit_exact() {
        let mut rng = Rng::from_seed(8);
        let model = VelocityModel::Mlp(MlpField::new(2, &[8, 4], 3, &mut rng));
        let bytes = encode_checkpoint(&model).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(model.params(), back.params());
        assert_eq!(model.eval(0.3, &[0.5, -0.2]), back.eval(0.3, &[0.5, -0.2]));
    }

    #[test]
    fn grid_checkpoint_roundtrip_bit_exact() {
        let mut g = GridField::new(1, 4, alloc::vec![5], alloc::vec![(-2.0, 3.0)]);
        let mut rng = Rng::from_seed(9);
        for v in g.values.iter_mut() {
            *v = rng.normal();
        }
        let model = VelocityModel::Grid(g);
        let bytes = encode_checkpoint(&model).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(model.params(), back.params());
        assert_eq!(model.eval(0.7, &[1.3]), back.eval(0.7, &[1.3]));
    }

    #[test]
    fn truncated_checkpoint_rejected() {
        let mut rng = Rng::from_seed(8);
        let model = VelocityModel::Mlp(MlpField::new(1, &[4], 2, &mut rng));
        let bytes = encode_checkpoint(&model).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
    }
}
