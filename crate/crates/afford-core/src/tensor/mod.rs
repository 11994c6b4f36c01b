//! Minimal dense-tensor engine: row-major contiguous storage, a tape-based
//! reverse-mode graph, Adam, and the `AFT1` on-disk format.
//!
//! f32 is the working precision for training and inference; every kernel is
//! also instantiated at f64 so verification suites can run finite-difference
//! checks at full precision.

pub mod adam;
pub mod aft;
pub mod gradcheck;
pub mod graph;
pub(crate) mod kernels;

use crate::error::{Error, Result};
use rand_distr::StandardNormal;
use std::fmt;

/// Element types the engine supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            c => Err(Error::Mismatch(format!("unknown AFT1 dtype code {c}"))),
        }
    }
}

/// Scalar bound shared by all kernels. Implemented for `f32` and `f64`.
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssignOps
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
    + rand_distr::uniform::SampleUniform
{
    const DTYPE: Dtype;
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    const BYTES: usize;
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
    const BYTES: usize = 4;
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes([
            bytes[0], bytes[1], bytes[2], bytes[3], bytes[4], bytes[5], bytes[6], bytes[7],
        ])
    }
    const BYTES: usize = 8;
}

/// Dense row-major tensor. `product(dims) == data.len()` always holds.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.dims)?;
        if self.data.len() <= 8 {
            write!(f, " {:?}", self.data)
        } else {
            write!(f, " [{} elements]", self.data.len())
        }
    }
}

pub fn numel(dims: &[usize]) -> usize {
    dims.iter().product()
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::shape("Tensor::new", format!("zero dim in {dims:?}")));
        }
        if numel(&dims) != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!("dims {:?} need {} elements, got {}", dims, numel(&dims), data.len()),
            ));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Tensor { dims: dims.to_vec(), data: vec![T::zero(); numel(dims)] }
    }

    pub fn full(dims: &[usize], value: T) -> Self {
        Tensor { dims: dims.to_vec(), data: vec![value; numel(dims)] }
    }

    pub fn scalar(value: T) -> Self {
        Tensor { dims: vec![1], data: vec![value] }
    }

    /// Standard-normal tensor from the given RNG.
    pub fn randn(dims: &[usize], rng: &mut rand_chacha::ChaCha8Rng) -> Self
    where
        StandardNormal: rand_distr::Distribution<T>,
    {
        let mut t = Self::zeros(dims);
        crate::rng::fill_normal(rng, &mut t.data);
        t
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.data.len() != 1 {
            return Err(Error::shape("Tensor::item", format!("dims {:?} not scalar", self.dims)));
        }
        Ok(self.data[0])
    }

    /// Same data, new dims (element counts must agree).
    pub fn reshaped(mut self, dims: Vec<usize>) -> Result<Self> {
        if numel(&dims) != self.data.len() {
            return Err(Error::shape(
                "Tensor::reshaped",
                format!("{:?} -> {:?}", self.dims, dims),
            ));
        }
        self.dims = dims;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { dims: self.dims.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::shape(
                "Tensor::zip_with",
                format!("{:?} vs {:?}", self.dims, other.dims),
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { dims: self.dims.clone(), data })
    }

    /// `self + alpha * other`, elementwise.
    pub fn axpy(&self, alpha: T, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + alpha * b)
    }

    pub fn scale(&self, alpha: T) -> Self {
        self.map(|v| v * alpha)
    }

    /// Errors if any element is NaN or infinite.
    pub fn check_finite(&self, ctx: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(ctx.to_string()))
        }
    }

    /// Converts element type (used by the f64 verification path).
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}

/// Row-major strides for `dims`.
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_bad_lengths() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn strides_row_major() {
        assert_eq!(strides(&[2, 3, 4]), vec![12, 4, 1]);
        assert_eq!(strides(&[5]), vec![1]);
    }

    #[test]
    fn finite_check_flags_nan() {
        let mut t = Tensor::<f32>::zeros(&[3]);
        assert!(t.check_finite("ok").is_ok());
        t.data_mut()[1] = f32::NAN;
        assert!(t.check_finite("bad").is_err());
    }

    #[test]
    fn cast_round_trips_values() {
        let t = Tensor::<f32>::new(vec![2], vec![1.5, -2.25]).unwrap();
        let d: Tensor<f64> = t.cast();
        assert_eq!(d.data(), &[1.5, -2.25]);
    }
}
