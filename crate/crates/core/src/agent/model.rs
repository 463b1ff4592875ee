//! Binary model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "RANAIQN\0"
//! version    u32      1
//! layers     u32      L
//! shapes     L x (inputs u32, outputs u32)
//! params     for each layer: weights (outputs x inputs, row-major) then bias, f64
//! ```

use alloc::vec::Vec;

use thiserror::Error;

use super::nn::{Dense, QNetwork};

pub const MODEL_MAGIC: &[u8; 8] = b"RANAIQN\0";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model version {0} (expected {MODEL_VERSION})")]
    Version(u32),
    #[error("model file truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after model parameters")]
    Trailing(usize),
    #[error("layer shapes do not chain")]
    BrokenChain,
    #[error("model shape {found:?} does not match configured shape {expected:?}")]
    ShapeMismatch {
        expected: Vec<(usize, usize)>,
        found: Vec<(usize, usize)>,
    },
}

pub fn encode_model(net: &QNetwork) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * net.layers().len() + 8 * net.num_params());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for l in net.layers() {
        out.extend_from_slice(&(l.inputs as u32).to_le_bytes());
        out.extend_from_slice(&(l.outputs as u32).to_le_bytes());
    }
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or(ModelError::Truncated(self.buf.len()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Decodes a model; when `expected` is given the stored shape must match it.
pub fn decode_model(bytes: &[u8], expected: Option<&[(usize, usize)]>) -> Result<QNetwork, ModelError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8).map_err(|_| ModelError::BadMagic)? != MODEL_MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(ModelError::Version(version));
    }
    let n = r.u32()? as usize;
    let mut shape = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        shape.push((r.u32()? as usize, r.u32()? as usize));
    }
    if n == 0 || shape.windows(2).any(|w| w[0].1 != w[1].0) {
        return Err(ModelError::BrokenChain);
    }
    if let Some(exp) = expected {
        if exp != shape.as_slice() {
            return Err(ModelError::ShapeMismatch {
                expected: exp.to_vec(),
                found: shape,
            });
        }
    }
    let mut layers = Vec::with_capacity(n);
    for &(inputs, outputs) in &shape {
        let mut l = Dense::zeros(inputs, outputs);
        for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
            *w = r.f64()?;
        }
        layers.push(l);
    }
    if r.pos != bytes.len() {
        return Err(ModelError::Trailing(bytes.len() - r.pos));
    }
    Ok(QNetwork::from_layers(layers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamId};
    use rand::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let net = QNetwork::init_uniform(&[8, 12, 6, 3], &mut stream(5, StreamId::AgentInit));
        let bytes = encode_model(&net);
        let back = decode_model(&bytes, Some(&net.shape())).unwrap();
        let mut rng = stream(5, StreamId::Custom(0));
        for _ in 0..100 {
            let s: [f64; 8] = core::array::from_fn(|_| rng.random_range(-2.0..2.0));
            let a = net.forward(&s);
            let b = back.forward(&s);
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn truncated_and_mismatched() {
        let net = QNetwork::zeros(&[8, 12, 6, 3]);
        let bytes = encode_model(&net);
        assert!(matches!(
            decode_model(&bytes[..bytes.len() - 3], None),
            Err(ModelError::Truncated(_))
        ));
        assert_eq!(decode_model(b"nope", None), Err(ModelError::BadMagic));
        let other = [(8, 4), (4, 3)];
        let err = decode_model(&bytes, Some(&other)).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("(8, 12)") && msg.contains("(8, 4)"), "{msg}");
    }
}
