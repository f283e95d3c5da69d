//! Flat little-endian binary checkpoints.
//!
//! ```text
//! u8      version (= CHECKPOINT_VERSION)
//! u32     network count
//! per network:
//!   u32   layer count
//!   per layer:
//!     u32 in_dim
//!     u32 out_dim
//!     u8  activation tag: 0 = Identity, 1 = ReLU, 2 = LeakyReLU
//!     f64 LeakyReLU slope (0 for other tags)
//!     f64 x (out_dim * in_dim)   weights, row-major [out x in]
//!     f64 x out_dim              bias
//! ```

use super::{Activation, Layer, MlpNetwork};
use crate::error::{DdrError, Result};
use crate::matrix::Matrix;

pub const CHECKPOINT_VERSION: u8 = 1;

// Guards allocation on corrupt headers.
const MAX_DIM: u32 = 1 << 20;

pub fn write_networks(nets: &[&MlpNetwork]) -> Vec<u8> {
    let mut out = vec![CHECKPOINT_VERSION];
    out.extend_from_slice(&(nets.len() as u32).to_le_bytes());
    for net in nets {
        out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
        for l in net.layers() {
            out.extend_from_slice(&(l.in_dim() as u32).to_le_bytes());
            out.extend_from_slice(&(l.out_dim() as u32).to_le_bytes());
            let (tag, slope) = match l.activation {
                Activation::Identity => (0u8, 0.0),
                Activation::Relu => (1, 0.0),
                Activation::LeakyRelu { slope } => (2, slope),
            };
            out.push(tag);
            out.extend_from_slice(&slope.to_le_bytes());
            for v in l.weight.as_slice().iter().chain(&l.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(DdrError::Checkpoint(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        let v = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
        if !v.is_finite() {
            return Err(DdrError::Checkpoint(format!(
                "non-finite value before byte {}",
                self.pos
            )));
        }
        Ok(v)
    }
}

pub fn read_networks(bytes: &[u8]) -> Result<Vec<MlpNetwork>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let version = r.u8()?;
    if version != CHECKPOINT_VERSION {
        return Err(DdrError::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let count = r.u32()?;
    if count > 64 {
        return Err(DdrError::Checkpoint(format!("implausible network count {count}")));
    }
    let mut nets = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let n_layers = r.u32()?;
        if n_layers == 0 || n_layers > 1024 {
            return Err(DdrError::Checkpoint(format!("implausible layer count {n_layers}")));
        }
        let mut layers = Vec::with_capacity(n_layers as usize);
        for _ in 0..n_layers {
            let in_dim = r.u32()?;
            let out_dim = r.u32()?;
            if in_dim == 0 || out_dim == 0 || in_dim > MAX_DIM || out_dim > MAX_DIM {
                return Err(DdrError::Checkpoint(format!(
                    "implausible layer shape {out_dim}x{in_dim}"
                )));
            }
            let tag = r.u8()?;
            let slope = r.f64()?;
            let activation = match tag {
                0 => Activation::Identity,
                1 => Activation::Relu,
                2 => Activation::leaky(slope)
                    .map_err(|e| DdrError::Checkpoint(e.to_string()))?,
                t => return Err(DdrError::Checkpoint(format!("unknown activation tag {t}"))),
            };
            let (i, o) = (in_dim as usize, out_dim as usize);
            let weights = (0..i * o).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let bias = (0..o).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            layers.push(Layer {
                weight: Matrix::from_vec(o, i, weights)?,
                bias,
                activation,
            });
        }
        nets.push(
            MlpNetwork::from_layers(layers).map_err(|e| DdrError::Checkpoint(e.to_string()))?,
        );
    }
    if r.pos != bytes.len() {
        return Err(DdrError::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(nets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let a = MlpNetwork::new(&[4, 6, 3], Activation::LeakyRelu { slope: 0.2 }, 9).unwrap();
        let b = MlpNetwork::new(&[3, 5, 1], Activation::Relu, 10).unwrap();
        let bytes = write_networks(&[&a, &b]);
        assert_eq!(bytes[0], CHECKPOINT_VERSION);
        let back = read_networks(&bytes).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let a = MlpNetwork::new(&[2, 2, 1], Activation::Relu, 1).unwrap();
        let bytes = write_networks(&[&a]);
        assert!(read_networks(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = 99;
        assert!(read_networks(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(read_networks(&extra).is_err());
        assert!(read_networks(b"garbage").is_err());
        assert!(read_networks(&[]).is_err());
    }
}
