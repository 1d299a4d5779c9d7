//! Binary parameter snapshots.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "FQALCKPT"
//! version  u32
//! count    u32
//! count × { name_len u32, name utf-8, ndim u32, dims u64 × ndim }
//! values   f64 × Σ numel, in table order
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"FQALCKPT";
pub const VERSION: u32 = 1;

pub fn encode(params: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for (_, t) in params {
        for v in t.data().iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("truncated checkpoint")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Parse a checkpoint into `(name, shape, values)` entries.
pub fn decode(bytes: &[u8]) -> std::result::Result<Vec<(String, Vec<usize>, Vec<f64>)>, String> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a checkpoint file (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let count = r.u32()? as usize;
    let mut table = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| "parameter name is not utf-8")?;
        let ndim = r.u32()? as usize;
        let dims = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
        table.push((name, dims));
    }
    let mut out = Vec::with_capacity(table.len());
    for (name, dims) in table {
        let n: usize = dims.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or("parameter too large")?)?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        out.push((name, dims, values));
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(out)
}

pub fn save(path: &Path, params: &[(String, Tensor)]) -> Result<()> {
    // write-then-rename so an interrupted save never clobbers the previous file
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, encode(params))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Copy values from a checkpoint into `params`, matching by name and shape.
pub fn load_into(path: &Path, params: &[(String, Tensor)]) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::Load { path: path.to_path_buf(), reason: e.to_string() })?;
    let fmt = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    let entries = decode(&bytes).map_err(fmt)?;
    if entries.len() != params.len() {
        return Err(fmt(format!("checkpoint holds {} parameters, model has {}", entries.len(), params.len())));
    }
    for ((name, dims, values), (want, t)) in entries.into_iter().zip(params) {
        if &name != want || dims != t.shape() {
            return Err(fmt(format!("entry {name} {dims:?} does not match model parameter {want} {:?}", t.shape())));
        }
        t.update(|d| d.copy_from_slice(&values));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_exact_round_trip() {
        let a = Tensor::param(vec![2, 3], vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300, -7.25, 1.0 / 3.0]).unwrap();
        let b = Tensor::param(vec![1], vec![42.0]).unwrap();
        let params = vec![("a".to_string(), a.clone()), ("b".to_string(), b.clone())];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&path, &params).unwrap();

        let a2 = Tensor::param(vec![2, 3], vec![0.0; 6]).unwrap();
        let b2 = Tensor::param(vec![1], vec![0.0]).unwrap();
        load_into(&path, &[("a".to_string(), a2.clone()), ("b".to_string(), b2.clone())]).unwrap();
        let bits = |t: &Tensor| t.to_vec().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a2), bits(&a));
        assert_eq!(bits(&b2), bits(&b));
        assert_eq!(encode(&params), std::fs::read(&path).unwrap());
    }

    #[test]
    fn mismatches_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save(&path, &[("w".into(), Tensor::zeros(vec![2]))]).unwrap();
        let err = load_into(&path, &[("w".into(), Tensor::zeros(vec![3]))]).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        std::fs::write(&path, b"FQALCKPT\x01\0\0\0").unwrap();
        assert!(matches!(load_into(&path, &[]), Err(Error::Format { .. })));
    }
}
