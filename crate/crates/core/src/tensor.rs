//! Dense row-major tensors and the `.pidx` binary container.
//!
//! Layout of a `.pidx` file (all integers little-endian):
//!
//! | offset      | size        | content                                  |
//! |-------------|-------------|------------------------------------------|
//! | 0           | 4           | magic `PIDX`                             |
//! | 4           | 1           | version, always `1`                      |
//! | 5           | 1           | dtype code, `1` = f32                    |
//! | 6           | 1           | ndim, 1..=4                              |
//! | 7           | 4 * ndim    | extents as `u32`                         |
//! | 7 + 4*ndim  | 4 * numel   | payload, row-major f32                   |
//!
//! Values are stored as `f32`; arithmetic elsewhere in the crate is done in
//! `f64` and narrowed only when a tensor is built.

use std::fs;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"PIDX";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;
pub const MAX_NDIM: usize = 4;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("bad magic: expected \"PIDX\"")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("invalid ndim {0}; expected 1..=4")]
    InvalidNdim(u8),
    #[error("shape {0:?} overflows the addressable element count")]
    ShapeOverflow(Vec<u32>),
    #[error("truncated data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("invalid shape {0:?}: need 1..=4 extents, each >= 1")]
    InvalidShape(Vec<usize>),
    #[error("data length {len} does not match shape {shape:?}")]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Dense tensor with 1 to 4 axes, stored as `f32` in C order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

fn validate_shape(shape: &[usize]) -> Result<usize, TensorError> {
    if shape.is_empty() || shape.len() > MAX_NDIM || shape.contains(&0) {
        return Err(TensorError::InvalidShape(shape.to_vec()));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| TensorError::InvalidShape(shape.to_vec()))
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        let numel = validate_shape(&shape)?;
        if numel != data.len() {
            return Err(TensorError::LengthMismatch { shape, len: data.len() });
        }
        Ok(Self { shape, data })
    }

    /// Builds a tensor from `f64` values, narrowing each to `f32`.
    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self, TensorError> {
        Self::new(shape, data.iter().map(|&v| v as f32).collect())
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self, TensorError> {
        let numel = validate_shape(&shape)?;
        Ok(Self {
            shape,
            data: vec![0.0; numel],
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    /// Splits along the leading axis into `shape[0]` tensors of the trailing shape.
    ///
    /// A 1-D tensor splits into `[1]`-shaped scalars.
    pub fn unstack(&self) -> Vec<Tensor> {
        let inner: Vec<usize> = if self.shape.len() == 1 {
            vec![1]
        } else {
            self.shape[1..].to_vec()
        };
        let step = inner.iter().product::<usize>();
        self.data
            .chunks_exact(step)
            .map(|chunk| Tensor {
                shape: inner.clone(),
                data: chunk.to_vec(),
            })
            .collect()
    }

    /// Stacks equally-shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor, TensorError> {
        let first = items.first().ok_or_else(|| TensorError::InvalidShape(vec![0]))?;
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        let mut data = Vec::with_capacity(first.len() * items.len());
        for item in items {
            if item.shape != first.shape {
                return Err(TensorError::LengthMismatch {
                    shape: first.shape.clone(),
                    len: item.len(),
                });
            }
            data.extend_from_slice(&item.data);
        }
        Tensor::new(shape, data)
    }

    /// Encodes into the `.pidx` byte layout. Output depends only on the tensor.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(7 + 4 * self.ndim() + 4 * self.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(DTYPE_F32);
        out.push(self.ndim() as u8);
        for &extent in &self.shape {
            out.extend_from_slice(&(extent as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TensorError> {
        if bytes.len() < 4 || &bytes[0..4] != MAGIC {
            return Err(TensorError::BadMagic);
        }
        if bytes.len() < 7 {
            return Err(TensorError::TruncatedData {
                expected: 7,
                found: bytes.len(),
            });
        }
        if bytes[4] != VERSION {
            return Err(TensorError::UnsupportedVersion(bytes[4]));
        }
        if bytes[5] != DTYPE_F32 {
            return Err(TensorError::UnsupportedDtype(bytes[5]));
        }
        let ndim = bytes[6];
        if ndim == 0 || ndim as usize > MAX_NDIM {
            return Err(TensorError::InvalidNdim(ndim));
        }
        let header_len = 7 + 4 * ndim as usize;
        if bytes.len() < header_len {
            return Err(TensorError::TruncatedData {
                expected: header_len,
                found: bytes.len(),
            });
        }
        let raw: Vec<u32> = bytes[7..header_len]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if raw.contains(&0) {
            return Err(TensorError::InvalidShape(raw.iter().map(|&e| e as usize).collect()));
        }
        let payload_len = raw
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e as usize))
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(header_len))
            .ok_or_else(|| TensorError::ShapeOverflow(raw.clone()))?;
        if bytes.len() < payload_len {
            return Err(TensorError::TruncatedData {
                expected: payload_len,
                found: bytes.len(),
            });
        }
        if bytes.len() > payload_len {
            return Err(TensorError::TrailingBytes(bytes.len() - payload_len));
        }
        let data = bytes[header_len..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            shape: raw.into_iter().map(|e| e as usize).collect(),
            data,
        })
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self, TensorError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| TensorError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<(), TensorError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| TensorError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(shape: &[u32]) -> Vec<u8> {
        let mut b = b"PIDX".to_vec();
        b.extend_from_slice(&[1, 1, shape.len() as u8]);
        for e in shape {
            b.extend_from_slice(&e.to_le_bytes());
        }
        b
    }

    #[test]
    fn reads_zero_matrix() {
        let mut bytes = header(&[2, 2]);
        bytes.extend_from_slice(&[0u8; 16]);
        let t = Tensor::from_bytes(&bytes).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.data(), &[0.0; 4]);
    }

    #[test]
    fn scalar_vector_is_fifteen_bytes() {
        // 4 magic + 1 version + 1 dtype + 1 ndim + 4 extent + 4 payload
        let t = Tensor::new(vec![1], vec![1.0]).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(bytes.len(), 15);
        assert_eq!(&bytes[11..], &1.0f32.to_le_bytes());
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = header(&[2, 2]);
        bytes.extend_from_slice(&[0u8; 10]);
        assert!(matches!(
            Tensor::from_bytes(&bytes),
            Err(TensorError::TruncatedData {
                expected: 31,
                found: 25
            })
        ));
    }

    #[test]
    fn rejects_bad_header_fields() {
        assert!(matches!(Tensor::from_bytes(b"NOPE"), Err(TensorError::BadMagic)));
        let mut b = header(&[1]);
        b[4] = 2;
        b.extend_from_slice(&[0; 4]);
        assert!(matches!(
            Tensor::from_bytes(&b),
            Err(TensorError::UnsupportedVersion(2))
        ));
        let mut b = header(&[1]);
        b.extend_from_slice(&[0; 5]);
        assert!(matches!(Tensor::from_bytes(&b), Err(TensorError::TrailingBytes(1))));
        let b = header(&[u32::MAX, u32::MAX, u32::MAX, u32::MAX]);
        assert!(matches!(Tensor::from_bytes(&b), Err(TensorError::ShapeOverflow(_))));
    }

    #[test]
    fn writes_are_deterministic() {
        let t = Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, f32::MIN, f32::MAX]).unwrap();
        assert_eq!(t.to_bytes(), t.clone().to_bytes());
    }

    #[test]
    fn stack_unstack() {
        let a = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(vec![2], vec![3.0, 4.0]).unwrap();
        let s = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.unstack(), vec![a, b]);
    }

    fn arb_tensor() -> impl Strategy<Value = Tensor> {
        prop::collection::vec(1usize..5, 1..=4).prop_flat_map(|shape| {
            let n = shape.iter().product::<usize>();
            prop::collection::vec(any::<u32>(), n).prop_map(move |bits| {
                Tensor::new(shape.clone(), bits.into_iter().map(f32::from_bits).collect()).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(t in arb_tensor()) {
            let back = Tensor::from_bytes(&t.to_bytes()).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            let a: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
