//! Binary tensor files.
//!
//! Layout, all little-endian:
//!
//! | offset          | size          | field                         |
//! |-----------------|---------------|-------------------------------|
//! | 0               | 4             | magic `MLNS`                  |
//! | 4               | 2             | version (`u16`, currently 1)  |
//! | 6               | 2             | rank (`u16`)                  |
//! | 8               | 8 · rank      | dims (`u64` each)             |
//! | 8 + 8 · rank    | 4 · Π dims    | payload, `f32`, row-major     |
//!
//! The fixed prefix is exactly 8 bytes, so dims and payload are naturally
//! 8- and 4-byte aligned and no padding is ever written. A file's length is
//! therefore exactly `8 + 8 · rank + 4 · Π dims`.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"MLNS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("file too short for a tensor header ({0} bytes)")]
    ShortHeader(usize),
    #[error("bad magic {0:?}, expected \"MLNS\"")]
    BadMagic([u8; 4]),
    #[error("unsupported tensor version {0}")]
    BadVersion(u16),
    #[error("length mismatch: dims {dims:?} need {expected} bytes, file has {actual}")]
    LengthMismatch {
        dims: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("dims {0:?} overflow")]
    DimOverflow(Vec<u64>),
    #[error("payload has {got} values but dims {dims:?} need {expected}")]
    DataMismatch {
        dims: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataMismatch {
                dims,
                expected,
                got: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    /// Rounds `f64` values to `f32`.
    pub fn from_f64(dims: Vec<usize>, data: &[f64]) -> Result<Self, TensorError> {
        Self::new(dims, data.iter().map(|&v| v as f32).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> Option<&[f32]> {
        if self.dims.len() != 2 || i >= self.dims[0] {
            return None;
        }
        let w = self.dims[1];
        Some(&self.data[i * w..(i + 1) * w])
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(encoded_len(&self.dims));
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u16).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TensorError> {
        let dims = decode_header(bytes)?;
        let offset = HEADER_LEN + 8 * dims.len();
        let data = bytes[offset..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { dims, data })
    }
}

/// Byte length of a file holding a tensor with `dims`.
pub fn encoded_len(dims: &[usize]) -> usize {
    HEADER_LEN + 8 * dims.len() + 4 * dims.iter().product::<usize>()
}

/// Parses and checks the header, including the total length; returns dims.
pub fn decode_header(bytes: &[u8]) -> Result<Vec<usize>, TensorError> {
    if bytes.len() < HEADER_LEN {
        return Err(TensorError::ShortHeader(bytes.len()));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(TensorError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(TensorError::BadVersion(version));
    }
    let rank = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let dims_end = HEADER_LEN + 8 * rank;
    if bytes.len() < dims_end {
        return Err(TensorError::LengthMismatch {
            dims: Vec::new(),
            expected: dims_end,
            actual: bytes.len(),
        });
    }
    let raw: Vec<u64> = bytes[HEADER_LEN..dims_end]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let count = raw
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(usize::try_from(d).ok()?))
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(dims_end))
        .ok_or_else(|| TensorError::DimOverflow(raw.clone()))?;
    let dims: Vec<usize> = raw.iter().map(|&d| d as usize).collect();
    if bytes.len() != count {
        return Err(TensorError::LengthMismatch {
            dims,
            expected: count,
            actual: bytes.len(),
        });
    }
    Ok(dims)
}

pub fn write_tensor(path: &Path, tensor: &Tensor) -> io::Result<()> {
    fs::write(path, tensor.encode())
}

pub fn read_tensor(path: &Path) -> Result<Tensor, TensorError> {
    Tensor::decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_exact() {
        let t = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, -0.5]).unwrap();
        let bytes = t.encode();
        assert_eq!(bytes.len(), 8 + 16 + 24);
        assert_eq!(&bytes[0..4], b"MLNS");
        assert_eq!(&bytes[4..8], &[1, 0, 2, 0]);
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &3u64.to_le_bytes());
        assert_eq!(&bytes[24..28], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[44..48], &(-0.5f32).to_le_bytes());
    }

    #[test]
    fn rejects_corruption() {
        let t = Tensor::new(vec![4], vec![0.0; 4]).unwrap();
        let bytes = t.encode();
        assert!(matches!(
            Tensor::decode(&bytes[..bytes.len() - 1]),
            Err(TensorError::LengthMismatch { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Tensor::decode(&bad), Err(TensorError::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(Tensor::decode(&bad), Err(TensorError::BadVersion(9))));
        assert!(matches!(Tensor::decode(&bytes[..5]), Err(TensorError::ShortHeader(5))));
        let mut huge = bytes[..8].to_vec();
        huge.extend_from_slice(&u64::MAX.to_le_bytes());
        huge[6] = 1;
        assert!(Tensor::decode(&huge).is_err());
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn scalar_tensor() {
        let t = Tensor::new(vec![], vec![7.5]).unwrap();
        assert_eq!(Tensor::decode(&t.encode()).unwrap(), t);
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(dims in prop::collection::vec(0usize..5, 0..4), seed in any::<u32>()) {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = (0..n)
                .map(|i| f32::from_bits(seed.wrapping_mul(2_654_435_761).wrapping_add(i as u32 * 40_503)))
                .collect();
            let t = Tensor::new(dims.clone(), data).unwrap();
            let bytes = t.encode();
            prop_assert_eq!(bytes.len(), encoded_len(&dims));
            let back = Tensor::decode(&bytes).unwrap();
            prop_assert_eq!(back.dims(), t.dims());
            let a: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
