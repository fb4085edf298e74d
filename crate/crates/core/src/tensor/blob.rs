//! DDPT blob format.
//!
//! Layout: `"DDPT"`, version `0x01`, dtype byte, ndim byte, `ndim` little-endian
//! `u32` dims, then the row-major little-endian payload. No padding.

use std::fs;
use std::path::Path;

use crate::error::{FormatError, Result};
use crate::real::{Dtype, Real};

use super::DenseTensor;

pub const MAGIC: &[u8; 4] = b"DDPT";
pub const VERSION: u8 = 0x01;

#[derive(Debug, Clone, PartialEq)]
pub enum BlobData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U32(Vec<u32>),
}

impl BlobData {
    pub fn dtype(&self) -> Dtype {
        match self {
            Self::F32(_) => Dtype::F32,
            Self::F64(_) => Dtype::F64,
            Self::U32(_) => Dtype::U32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::F32(v) => v.len(),
            Self::F64(v) => v.len(),
            Self::U32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn dtype_name(d: Dtype) -> &'static str {
    match d {
        Dtype::F32 => "f32",
        Dtype::F64 => "f64",
        Dtype::U32 => "u32",
    }
}

/// An n-dimensional array as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub dims: Vec<u32>,
    pub data: BlobData,
}

impl Blob {
    pub fn new(dims: Vec<u32>, data: BlobData) -> Result<Self> {
        let n = element_count(&dims).ok_or(FormatError::DimOverflow)?;
        if n != data.len() {
            return Err(crate::Error::shape(format!("blob dims {dims:?} hold {n} elements, data has {}", data.len())));
        }
        if dims.len() > u8::MAX as usize {
            return Err(FormatError::BadNdim { expected: u8::MAX, found: u8::MAX }.into());
        }
        Ok(Self { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dtype = self.data.dtype();
        let mut out = Vec::with_capacity(8 + 4 * self.dims.len() + dtype.size() * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(dtype as u8);
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            BlobData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            BlobData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            BlobData::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4, "magic")?;
        if magic != MAGIC {
            return Err(FormatError::BadMagic);
        }
        let version = cur.take(1, "version")?[0];
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let code = cur.take(1, "dtype")?[0];
        let dtype = Dtype::from_code(code).ok_or(FormatError::BadDtype(code))?;
        let ndim = cur.take(1, "ndim")?[0] as usize;
        let dims: Vec<u32> = cur
            .take(4 * ndim, "dims")?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let n = element_count(&dims).ok_or(FormatError::DimOverflow)?;
        let payload_len = n.checked_mul(dtype.size()).ok_or(FormatError::DimOverflow)?;
        let payload = cur.take(payload_len, "payload")?;
        if cur.pos != bytes.len() {
            return Err(FormatError::TrailingBytes(bytes.len() - cur.pos));
        }
        let data = match dtype {
            Dtype::F32 => BlobData::F32(payload.chunks_exact(4).map(f32::read_le).collect()),
            Dtype::F64 => BlobData::F64(payload.chunks_exact(8).map(f64::read_le).collect()),
            Dtype::U32 => BlobData::U32(
                payload.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes"))).collect(),
            ),
        };
        Ok(Self { dims, data })
    }
}

fn element_count(dims: &[u32]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).ok_or(FormatError::Truncated(field))?;
        if end > self.bytes.len() {
            return Err(FormatError::Truncated(field));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

pub fn write_blob(blob: &Blob, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, blob.to_bytes())?;
    Ok(())
}

pub fn read_blob(path: impl AsRef<Path>) -> Result<Blob> {
    let bytes = fs::read(path)?;
    Ok(Blob::from_bytes(&bytes)?)
}

impl<T: Real> DenseTensor<T> {
    pub fn to_blob(&self) -> Blob {
        let dims = vec![self.channels() as u32, self.height() as u32, self.width() as u32];
        let data = match T::DTYPE {
            Dtype::F32 => BlobData::F32(self.data().iter().map(|v| v.to_f32().expect("f32")).collect()),
            Dtype::F64 => BlobData::F64(self.data().iter().map(|v| v.as_f64()).collect()),
            Dtype::U32 => unreachable!("reals are never u32"),
        };
        Blob { dims, data }
    }

    /// Interprets a 3-D blob of the matching float dtype as a tensor.
    pub fn from_blob(blob: Blob) -> Result<Self, FormatError> {
        if blob.dims.len() != 3 {
            return Err(FormatError::BadNdim { expected: 3, found: blob.dims.len() as u8 });
        }
        let (c, h, w) = (blob.dims[0] as usize, blob.dims[1] as usize, blob.dims[2] as usize);
        let found = blob.data.dtype();
        let data: Vec<T> = match (T::DTYPE, blob.data) {
            (Dtype::F32, BlobData::F32(v)) => v.into_iter().map(|x| T::from_f32(x).expect("f32")).collect(),
            (Dtype::F64, BlobData::F64(v)) => v.into_iter().map(|x| T::from_f64(x).expect("f64")).collect(),
            _ => {
                return Err(FormatError::DtypeMismatch { expected: dtype_name(T::DTYPE), found: dtype_name(found) })
            }
        };
        Ok(Self::from_parts_unchecked(c, h, w, data))
    }
}

pub fn write_tensor<T: Real>(t: &DenseTensor<T>, path: impl AsRef<Path>) -> Result<()> {
    write_blob(&t.to_blob(), path)
}

pub fn read_tensor<T: Real>(path: impl AsRef<Path>) -> Result<DenseTensor<T>> {
    Ok(DenseTensor::from_blob(read_blob(path)?)?)
}
