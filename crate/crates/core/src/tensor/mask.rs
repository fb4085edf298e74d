use crate::error::{Error, Result};
use crate::real::Real;

use super::DenseTensor;

/// H×W grid of {0, 1} values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![false; height * width] }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![true; height * width] }
    }

    pub fn from_bools(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(format!("mask length {} != {height}x{width}", data.len())));
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for h in 0..height {
            for w in 0..width {
                data.push(f(h, w));
            }
        }
        Self { height, width, data }
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
    pub fn get(&self, h: usize, w: usize) -> bool {
        self.data[h * self.width + w]
    }

    #[inline]
    pub fn set(&mut self, h: usize, w: usize, v: bool) {
        self.data[h * self.width + w] = v;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Elementwise max of two masks.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if !self.same_dims(other) {
            return Err(Error::shape("mask union dims differ"));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect();
        Ok(Self { data, ..*self })
    }

    /// Tight bounding box `(h0, w0, h1, w1)` with exclusive ends, or `None` if empty.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for h in 0..self.height {
            for w in 0..self.width {
                if self.get(h, w) {
                    bb = Some(match bb {
                        None => (h, w, h + 1, w + 1),
                        Some((h0, w0, h1, w1)) => (h0.min(h), w0.min(w), h1.max(h + 1), w1.max(w + 1)),
                    });
                }
            }
        }
        bb
    }

    pub fn to_tensor<T: Real>(&self) -> DenseTensor<T> {
        DenseTensor::from_fn(1, self.height, self.width, |_, h, w| if self.get(h, w) { T::one() } else { T::zero() })
    }

    /// Reads a single-channel tensor whose values are exactly 0 or 1.
    pub fn from_tensor<T: Real>(t: &DenseTensor<T>) -> Result<Self> {
        if t.channels() != 1 {
            return Err(Error::ChannelMismatch { expected: 1, got: t.channels() });
        }
        let mut data = Vec::with_capacity(t.plane_len());
        for &v in t.data() {
            if v == T::one() {
                data.push(true);
            } else if v == T::zero() {
                data.push(false);
            } else {
                return Err(Error::invalid(format!("mask value {v} is not 0 or 1")));
            }
        }
        Ok(Self { height: t.height(), width: t.width(), data })
    }
}

/// `1` where the value is strictly greater than `threshold`.
pub fn binarize<T: Real>(t: &DenseTensor<T>, threshold: T) -> Result<BinaryMask> {
    if t.channels() != 1 {
        return Err(Error::ChannelMismatch { expected: 1, got: t.channels() });
    }
    Ok(BinaryMask { height: t.height(), width: t.width(), data: t.data().iter().map(|&v| v > threshold).collect() })
}
