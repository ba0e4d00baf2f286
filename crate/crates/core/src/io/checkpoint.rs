//! Flat binary tensor checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"TVCK"  u32 version (1)  u32 count
//! count x { u32 name_len, name (UTF-8), u8 dtype (0 = f32, 1 = f64),
//!           u32 ndim, ndim x u64 dim, data }
//! ```

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::write_atomic;
use crate::engine::{DType, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TVCK";
pub const VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn encode<T: Real>(tensors: &[(String, Tensor<T>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(VERSION).expect("vec write");
    out.write_u32::<LittleEndian>(tensors.len() as u32).expect("vec write");
    for (name, t) in tensors {
        out.write_u32::<LittleEndian>(name.len() as u32).expect("vec write");
        out.write_all(name.as_bytes()).expect("vec write");
        out.push(match T::DTYPE {
            DType::Float32 => 0,
            DType::Float64 => 1,
        });
        out.write_u32::<LittleEndian>(t.ndim() as u32).expect("vec write");
        for &d in t.shape() {
            out.write_u64::<LittleEndian>(d as u64).expect("vec write");
        }
        for &v in t.data() {
            match T::DTYPE {
                DType::Float32 => out.write_f32::<LittleEndian>(v.as_f64() as f32),
                DType::Float64 => out.write_f64::<LittleEndian>(v.as_f64()),
            }
            .expect("vec write");
        }
    }
    out
}

/// Decodes every tensor, converting to `T`.
pub fn decode<T: Real>(bytes: &[u8]) -> Result<Vec<(String, Tensor<T>)>> {
    let mut c = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    c.read_exact(&mut magic).map_err(|_| bad("file too short"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let trunc = |_| bad("truncated checkpoint");
    let version = c.read_u32::<LittleEndian>().map_err(trunc)?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = c.read_u32::<LittleEndian>().map_err(trunc)?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = c.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        let mut name = vec![0u8; len];
        c.read_exact(&mut name).map_err(trunc)?;
        let name = String::from_utf8(name).map_err(|_| bad("tensor name is not UTF-8"))?;
        let dtype = c.read_u8().map_err(trunc)?;
        let ndim = c.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        let shape: Vec<usize> = (0..ndim)
            .map(|_| c.read_u64::<LittleEndian>().map(|d| d as usize).map_err(trunc))
            .collect::<Result<_>>()?;
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n)
            .map(|_| match dtype {
                0 => c.read_f32::<LittleEndian>().map(f64::from).map_err(trunc),
                1 => c.read_f64::<LittleEndian>().map_err(trunc),
                other => Err(bad(format!("unknown dtype tag {other}"))),
            })
            .collect::<Result<_>>()?;
        out.push((name, Tensor::from_f64(shape, &data)?));
    }
    if c.position() != bytes.len() as u64 {
        return Err(bad("trailing bytes"));
    }
    Ok(out)
}

pub fn save_store<T: Real>(path: &Path, store: &ParamStore<T>) -> Result<()> {
    let tensors: Vec<_> = store.iter().map(|(_, p)| (p.name.clone(), p.value.clone())).collect();
    write_atomic(path, &encode(&tensors))
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor<f64>)>> {
    decode(&super::read_file(path)?)
}

/// Overwrites every parameter of `store` with the tensor of the same name.
pub fn restore_store<T: Real>(path: &Path, store: &mut ParamStore<T>) -> Result<()> {
    let tensors = decode::<T>(&super::read_file(path)?)?;
    let ids: Vec<_> = store.iter().map(|(id, p)| (id, p.name.clone())).collect();
    for (id, name) in ids {
        let t = tensors
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| bad(format!("missing tensor '{name}'")))?;
        if t.shape() != store.value(id).shape() {
            return Err(Error::ShapeMismatch {
                op: "restore_checkpoint",
                lhs: store.value(id).shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
        *store.value_mut(id) = t.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_f32() {
        let t = Tensor::<f32>::new(vec![2, 2], vec![0.1, -2.0, 3.5, 1e-30]).unwrap();
        let bytes = encode(&[("w".to_string(), t.clone())]);
        let back = decode::<f32>(&bytes).unwrap();
        assert_eq!(back, vec![("w".to_string(), t)]);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&[("w".to_string(), Tensor::<f64>::zeros(&[3]))]);
        assert!(decode::<f64>(&bytes[..bytes.len() - 1]).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(decode::<f64>(&bad_magic).is_err());
    }

    #[test]
    fn restore_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        let mut a = ParamStore::<f64>::new();
        a.add("x", Tensor::vector(vec![1.0, 2.0]));
        save_store(&p, &a).unwrap();
        let mut b = ParamStore::<f64>::new();
        let id = b.add("x", Tensor::zeros(&[2]));
        restore_store(&p, &mut b).unwrap();
        assert_eq!(b.value(id).data(), &[1.0, 2.0]);
    }
}
