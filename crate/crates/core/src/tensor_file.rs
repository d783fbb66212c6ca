//! Minimal binary tensor container.
//!
//! Layout, all little-endian:
//!
//! | bytes | content                          |
//! |-------|----------------------------------|
//! | 4     | magic `WPPT`                     |
//! | 4     | version (`u32`, currently 1)     |
//! | 16    | `B, C, H, W` as `u32`            |
//! | 4·N   | row-major `f32` payload          |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Shape, TensorBatch};

pub const MAGIC: &[u8; 4] = b"WPPT";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

pub fn encode(x: &TensorBatch) -> Result<Vec<u8>> {
    let shape = x.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * shape.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in shape.dims() {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("extent {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in x.array().iter() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::NumericDomain(format!("{v} is not representable as f32")));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<TensorBatch> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected WPPT".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    let version = word(1);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dims = [word(2), word(3), word(4), word(5)].map(|d| d as usize);
    if dims.contains(&0) {
        return Err(Error::Format(format!("header dims {dims:?} must be positive")));
    }
    let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
    let expected = dims
        .iter()
        .try_fold(4usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload has {} bytes, header {shape} needs {expected}",
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let x = TensorBatch::from_vec(shape, values)?;
    x.ensure_finite("tensor file payload")?;
    Ok(x)
}

pub fn read(path: &Path) -> Result<TensorBatch> {
    decode(&fs::read(path)?)
}

/// Writes through a temporary sibling and renames it into place.
pub fn write(path: &Path, x: &TensorBatch) -> Result<()> {
    write_atomic(path, &encode(x)?)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(std::io::Error::other(format!("{} has no file name", path.display()))))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Domain;

    #[test]
    fn roundtrip_is_f32_exact() {
        let x = TensorBatch::standard_normal(Shape::new(2, 3, 4, 6), 1, Domain::Data, 0);
        let bytes = encode(&x).unwrap();
        assert_eq!(bytes.len(), 24 + 4 * 144);
        assert_eq!(&bytes[..4], b"WPPT");
        let back = decode(&bytes).unwrap();
        assert_eq!(back.shape(), x.shape());
        for (a, b) in back.array().iter().zip(x.array()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn header_is_little_endian() {
        let x = TensorBatch::filled(Shape::new(1, 2, 2, 4), 1.5);
        let bytes = encode(&x).unwrap();
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..24], &[1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 4, 0, 0, 0]);
        assert_eq!(&bytes[24..28], &1.5f32.to_le_bytes());
    }

    #[test]
    fn rejects_malformed_files() {
        let good = encode(&TensorBatch::zeros(Shape::new(1, 1, 2, 2))).unwrap();
        assert!(matches!(decode(&good[..10]), Err(Error::Format(_))));
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Format(_))));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode(&bad), Err(Error::Format(_))));
        let mut bad = good.clone();
        bad[8] = 0;
        assert!(matches!(decode(&bad), Err(Error::Format(_))));
        assert!(matches!(decode(&good[..good.len() - 1]), Err(Error::Format(_))));
        let mut bad = good.clone();
        bad[24..28].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode(&bad), Err(Error::NumericDomain(_))));
        let huge = TensorBatch::filled(Shape::new(1, 1, 1, 1), 1e300);
        assert!(encode(&huge).is_err());
    }
}
