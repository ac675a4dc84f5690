//! CPEH head checkpoints.
//!
//! Layout (little-endian): magic "CPEH" | version u16 | input_dim u32 |
//! hidden u32 | w1, b1, w2, b2 as f64 | first moments, second moments in the
//! same order | step u64.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::numerics::Mat64;

use super::mlp::{HeadParams, MlpHead};

pub const HEAD_MAGIC: [u8; 4] = *b"CPEH";
pub const HEAD_VERSION: u16 = 1;

fn put_params(buf: &mut Vec<u8>, p: &HeadParams) {
    for t in p.tensors() {
        for v in t {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn write_head<W: Write>(head: &MlpHead, mut out: W) -> Result<u64> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&HEAD_MAGIC);
    buf.extend_from_slice(&HEAD_VERSION.to_le_bytes());
    buf.extend_from_slice(&(head.input_dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(head.hidden() as u32).to_le_bytes());
    put_params(&mut buf, &head.params);
    put_params(&mut buf, &head.first_moment);
    put_params(&mut buf, &head.second_moment);
    buf.extend_from_slice(&head.step.to_le_bytes());
    out.write_all(&buf)?;
    Ok(buf.len() as u64)
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::TruncatedFile,
        _ => Error::Io(e),
    })?;
    Ok(b)
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    (0..n)
        .map(|_| read_exact(r).map(f64::from_le_bytes))
        .collect()
}

fn read_params<R: Read>(r: &mut R, input_dim: usize, hidden: usize) -> Result<HeadParams> {
    let w1 = Mat64::from_vec(hidden, input_dim, read_f64s(r, hidden * input_dim)?)?;
    let b1 = read_f64s(r, hidden)?;
    let w2 = read_f64s(r, hidden)?;
    let b2 = f64::from_le_bytes(read_exact(r)?);
    Ok(HeadParams { w1, b1, w2, b2 })
}

pub fn read_head<R: Read>(mut source: R) -> Result<MlpHead> {
    let magic: [u8; 4] = read_exact(&mut source)?;
    if magic != HEAD_MAGIC {
        return Err(Error::BadMagic {
            expected: HEAD_MAGIC,
            found: magic,
        });
    }
    let version = u16::from_le_bytes(read_exact(&mut source)?);
    if version != HEAD_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let input_dim = u32::from_le_bytes(read_exact(&mut source)?) as usize;
    let hidden = u32::from_le_bytes(read_exact(&mut source)?) as usize;
    let params = read_params(&mut source, input_dim, hidden)?;
    let first = read_params(&mut source, input_dim, hidden)?;
    let second = read_params(&mut source, input_dim, hidden)?;
    let step = u64::from_le_bytes(read_exact(&mut source)?);
    let mut rest = Vec::new();
    source.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::TrailingData(rest.len()));
    }
    if !params.is_finite() || !first.is_finite() || !second.is_finite() {
        return Err(Error::NonFiniteValue("head parameters"));
    }
    MlpHead::from_parts(params, first, second, step)
}
