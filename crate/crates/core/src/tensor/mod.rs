//! Dense C×H×W tensors, binary masks, resampling, pyramid aggregation and
//! the DDPT blob format.

mod blob;
mod mask;
mod pyramid;
mod resize;

pub use blob::{read_blob, read_tensor, write_blob, write_tensor, Blob, BlobData};
pub use mask::{binarize, BinaryMask};
pub use pyramid::{aggregate_pyramid, pyramid_level_dims, FeaturePyramid};
pub use resize::bilinear_resize;
pub(crate) use resize::lerp;

use crate::error::{Error, Result};
use crate::real::Real;

/// Row-major `(c, h, w)` grid of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor<T = f32> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> DenseTensor<T> {
    pub(crate) fn from_parts_unchecked(channels: usize, height: usize, width: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        Self { channels, height, width, data }
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, T::zero())
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        Self { channels, height, width, data: vec![value; channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "data length {} does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor data"));
        }
        Ok(Self { channels, height, width, data })
    }

    /// Builds a tensor from a closure evaluated at every `(c, h, w)`.
    pub fn from_fn(channels: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for h in 0..height {
                for w in 0..width {
                    data.push(f(c, h, w));
                }
            }
        }
        Self { channels, height, width, data }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, h: usize, w: usize) -> usize {
        (c * self.height + h) * self.width + w
    }

    #[inline]
    pub fn get(&self, c: usize, h: usize, w: usize) -> T {
        self.data[self.index(c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, h: usize, w: usize, v: T) {
        let i = self.index(c, h, w);
        self.data[i] = v;
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Channel vector at one pixel.
    pub fn pixel(&self, h: usize, w: usize) -> Vec<T> {
        (0..self.channels).map(|c| self.get(c, h, w)).collect()
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { data: self.data.iter().map(|&v| f(v)).collect(), ..*self }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if !self.same_dims(other) {
            return Err(Error::shape(format!("{:?} vs {:?}", self.dims(), other.dims())));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { data, ..*self })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    /// Stacks the channels of `self` followed by those of `other`.
    pub fn concat_channels(&self, other: &Self) -> Result<Self> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::shape(format!(
                "concat spatial {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self { channels: self.channels + other.channels, height: self.height, width: self.width, data })
    }

    /// Selects a contiguous channel range.
    pub fn slice_channels(&self, start: usize, end: usize) -> Self {
        let n = self.plane_len();
        Self { channels: end - start, height: self.height, width: self.width, data: self.data[start * n..end * n].to_vec() }
    }

    pub fn cast<U: Real>(&self) -> DenseTensor<U> {
        DenseTensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if !self.same_dims(other) {
            return Err(Error::shape(format!("{:?} vs {:?}", self.dims(), other.dims())));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (*a - *b).abs().as_f64()).fold(0.0, f64::max))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
