//! `AFT1` tensor files.
//!
//! Layout: bytes 0–3 magic `AFT1`; u8 dtype (1 = f32, 2 = f64); u8 ndim;
//! ndim × u64 little-endian dims; raw little-endian row-major payload.
//! One tensor per file.

use super::{numel, Dtype, Scalar, Tensor};
use crate::error::{Error, Result};
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 4] = b"AFT1";

pub fn encode<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + t.rank() * 8 + t.len() * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.push(T::DTYPE.code());
    out.push(t.rank() as u8);
    for &d in t.dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    let (dtype, dims, payload) = decode_header(bytes)?;
    if dtype != T::DTYPE {
        return Err(Error::Mismatch(format!(
            "AFT1 dtype {:?} does not match requested {:?}",
            dtype,
            T::DTYPE
        )));
    }
    let n = numel(&dims);
    if payload.len() != n * T::BYTES {
        return Err(Error::Mismatch(format!(
            "AFT1 payload is {} bytes, dims {:?} need {}",
            payload.len(),
            dims,
            n * T::BYTES
        )));
    }
    let data = payload.chunks_exact(T::BYTES).map(T::read_le).collect();
    Tensor::new(dims, data)
}

fn decode_header(bytes: &[u8]) -> Result<(Dtype, Vec<usize>, &[u8])> {
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(Error::Mismatch("not an AFT1 file".into()));
    }
    let dtype = Dtype::from_code(bytes[4])?;
    let ndim = bytes[5] as usize;
    let header = 6 + ndim * 8;
    if bytes.len() < header {
        return Err(Error::Mismatch("truncated AFT1 header".into()));
    }
    let mut dims = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let mut b = [0u8; 8];
        b.copy_from_slice(&bytes[6 + i * 8..6 + (i + 1) * 8]);
        dims.push(u64::from_le_bytes(b) as usize);
    }
    Ok((dtype, dims, &bytes[header..]))
}

pub fn write<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<()> {
    fs::write(path, encode(t))?;
    Ok(())
}

pub fn read<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    decode(&fs::read(path)?)
}

/// Reads a file that may hold either precision, widening f32 to f64.
pub fn read_as_f64(path: &Path) -> Result<Tensor<f64>> {
    let bytes = fs::read(path)?;
    let (dtype, _, _) = decode_header(&bytes)?;
    match dtype {
        Dtype::F64 => decode::<f64>(&bytes),
        Dtype::F32 => Ok(decode::<f32>(&bytes)?.cast()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_bytes_are_exact() {
        let t = Tensor::<f32>::new(vec![2, 3], (0..6).map(|v| v as f32).collect()).unwrap();
        let bytes = encode(&t);
        assert_eq!(&bytes[..4], b"AFT1");
        assert_eq!(bytes[4], 1); // f32
        assert_eq!(bytes[5], 2); // ndim
        assert_eq!(&bytes[6..14], &2u64.to_le_bytes());
        assert_eq!(&bytes[14..22], &3u64.to_le_bytes());
        assert_eq!(bytes.len(), 22 + 6 * 4);
        assert_eq!(&bytes[22..26], &0f32.to_le_bytes());
    }

    #[test]
    fn f64_round_trip_and_dtype_guard() {
        let t = Tensor::<f64>::new(vec![4], vec![1.5, -0.25, 3.0, 0.0]).unwrap();
        let bytes = encode(&t);
        assert_eq!(bytes[4], 2);
        let back = decode::<f64>(&bytes).unwrap();
        assert_eq!(back, t);
        assert!(decode::<f32>(&bytes).is_err());
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode::<f32>(b"nope").is_err());
        assert!(decode::<f32>(b"AFT1\x07\x01").is_err());
    }
}
