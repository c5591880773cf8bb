//! Binary network checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      b"LKNN"
//! version    u32 (= 1)
//! n_dims     u32, then n_dims × u32 layer widths
//! hidden     u8 activation tag
//! output     u8 activation tag
//! side       u8 (0 = none, 1 = present), then u32 layer, u32 width
//! n_params   u64, then n_params × f64 parameters
//! checksum   u32 CRC-32 of every preceding byte
//! ```

use std::io::{Read, Write};

use thiserror::Error;

use super::{Activation, Mlp, MlpSpec, NnError, SideInput};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"LKNN";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a network checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checksum mismatch")]
    Checksum,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Shape(#[from] NnError),
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() < n {
            return Err(CheckpointError::Corrupt("unexpected end of data".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn activation(tag: u8) -> Result<Activation, CheckpointError> {
    Activation::from_tag(tag).ok_or_else(|| CheckpointError::Corrupt(format!("unknown activation tag {tag}")))
}

impl<T: Scalar> Mlp<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let spec = &self.spec;
        let mut out = Vec::with_capacity(64 + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(spec.layer_dims.len() as u32).to_le_bytes());
        for &d in &spec.layer_dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(spec.hidden.tag());
        out.push(spec.output.tag());
        match spec.side_input {
            Some(side) => {
                out.push(1);
                out.extend_from_slice(&(side.layer as u32).to_le_bytes());
                out.extend_from_slice(&(side.width as u32).to_le_bytes());
            }
            None => {
                out.push(0);
                out.extend_from_slice(&[0; 8]);
            }
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_f64_lossy().to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let mut cur = Cursor { buf: &body[4..] };
        let version = cur.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        if crc32fast::hash(body) != stored {
            return Err(CheckpointError::Checksum);
        }
        let n_dims = cur.u32()? as usize;
        if n_dims > 1024 {
            return Err(CheckpointError::Corrupt(format!("{n_dims} layers")));
        }
        let layer_dims = (0..n_dims).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let hidden = activation(cur.u8()?)?;
        let output = activation(cur.u8()?)?;
        let has_side = cur.u8()?;
        let side = SideInput { layer: cur.u32()? as usize, width: cur.u32()? as usize };
        let side_input = match has_side {
            0 => None,
            1 => Some(side),
            other => return Err(CheckpointError::Corrupt(format!("side-input flag {other}"))),
        };
        let spec = MlpSpec { layer_dims, hidden, output, side_input };
        spec.validate()?;
        let n = cur.u64()? as usize;
        if n != spec.param_count() {
            return Err(CheckpointError::Corrupt(format!("{n} parameters for a {}-parameter shape", spec.param_count())));
        }
        let params = (0..n).map(|_| cur.f64().map(T::lit)).collect::<Result<Vec<_>, _>>()?;
        if !cur.buf.is_empty() {
            return Err(CheckpointError::Corrupt("trailing bytes".into()));
        }
        Ok(Mlp::from_params(spec, params)?)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), CheckpointError> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, CheckpointError> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
