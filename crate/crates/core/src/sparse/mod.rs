//! Site-list sparse tensors and the global IUV branch's sparse residual FCN.
//!
//! Every operation here keeps the active site set fixed (submanifold rule);
//! only [`suppress_background`] decides which sites exist.

mod block;
mod ian;
mod ssc;

pub use block::{sparse_residual_block, FcnGrads, FcnTape, ResidualBlock, SparseFcn, SubBlock, SubBlockGrads};
pub use ian::{ian_backward, ian_forward, GroupKind, IanGrads, IanParams, InstanceAssignment, NormMode};
pub use ssc::{ssc_backward, ssc_forward, ssc_forward_indexed, NeighborIndex, SscGrads, SscWeights, KERNEL_OFFSETS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{BinaryMask, Blob, BlobData, DenseTensor};

/// Active site coordinate; ordering is lexicographic `(h, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site {
    pub h: u32,
    pub w: u32,
}

impl Site {
    pub fn new(h: usize, w: usize) -> Self {
        Self { h: h as u32, w: w as u32 }
    }
}

/// Sorted unique active sites, each carrying a `channels`-long vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor<T = f32> {
    height: usize,
    width: usize,
    channels: usize,
    sites: Vec<Site>,
    values: Vec<T>,
}

impl<T: Real> SparseTensor<T> {
    pub fn new(height: usize, width: usize, channels: usize, sites: Vec<Site>, values: Vec<T>) -> Result<Self> {
        if values.len() != sites.len() * channels {
            return Err(Error::shape(format!("{} values for {} sites x {channels} channels", values.len(), sites.len())));
        }
        for pair in sites.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::invalid(format!("sites not strictly increasing at {:?}", pair[1])));
            }
        }
        if let Some(s) = sites.iter().find(|s| s.h as usize >= height || s.w as usize >= width) {
            return Err(Error::invalid(format!("site {s:?} outside {height}x{width}")));
        }
        Ok(Self { height, width, channels, sites, values })
    }

    pub fn empty(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels, sites: Vec::new(), values: Vec::new() }
    }

    /// Same sites, new values (length `sites * channels`).
    pub fn with_values(&self, channels: usize, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), self.sites.len() * channels);
        Self { height: self.height, width: self.width, channels, sites: self.sites.clone(), values }
    }

    pub fn zeros_like(&self) -> Self {
        self.with_values(self.channels, vec![T::zero(); self.values.len()])
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
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    #[inline]
    pub fn site_values(&self, i: usize) -> &[T] {
        &self.values[i * self.channels..(i + 1) * self.channels]
    }

    pub fn same_sites(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width && self.sites == other.sites
    }

    /// Elementwise sum on identical site sets.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.same_sites(other) {
            return Err(Error::invalid("residual add needs identical site sets"));
        }
        if self.channels != other.channels {
            return Err(Error::ChannelMismatch { expected: self.channels, got: other.channels });
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| a + b).collect();
        Ok(self.with_values(self.channels, values))
    }

    pub fn relu(&self) -> Self {
        self.with_values(self.channels, self.values.iter().map(|v| v.max(T::zero())).collect())
    }

    /// Coordinate blob `(|sites| x 2, u32)` and value blob `(|sites| x C)`.
    pub fn to_blobs(&self) -> (Blob, Blob) {
        let coords = self.sites.iter().flat_map(|s| [s.h, s.w]).collect();
        let n = self.sites.len() as u32;
        let coord_blob = Blob { dims: vec![n, 2], data: BlobData::U32(coords) };
        let data = match T::DTYPE {
            crate::real::Dtype::F64 => BlobData::F64(self.values.iter().map(|v| v.as_f64()).collect()),
            _ => BlobData::F32(self.values.iter().map(|v| v.to_f32().expect("f32")).collect()),
        };
        (coord_blob, Blob { dims: vec![n, self.channels as u32], data })
    }

    pub fn from_blobs(height: usize, width: usize, coords: Blob, values: Blob) -> Result<Self> {
        let BlobData::U32(c) = coords.data else {
            return Err(Error::invalid("coordinate blob must be u32"));
        };
        if coords.dims.len() != 2 || coords.dims[1] != 2 || values.dims.len() != 2 || values.dims[0] != coords.dims[0] {
            return Err(Error::shape("sparse blob dims"));
        }
        let sites = c.chunks_exact(2).map(|p| Site { h: p[0], w: p[1] }).collect();
        let vals: Vec<T> = match values.data {
            BlobData::F32(v) => v.into_iter().map(|x| T::from_f32(x).expect("f32")).collect(),
            BlobData::F64(v) => v.into_iter().map(|x| T::from_f64(x).expect("f64")).collect(),
            BlobData::U32(_) => return Err(Error::invalid("value blob must be float")),
        };
        Self::new(height, width, values.dims[1] as usize, sites, vals)
    }
}

/// Gathers the `fg = 1` pixels of `x` into a site list.
pub fn to_sparse<T: Real>(x: &DenseTensor<T>, fg: &BinaryMask) -> Result<SparseTensor<T>> {
    if x.height() != fg.height() || x.width() != fg.width() {
        return Err(Error::shape(format!(
            "tensor {}x{} vs mask {}x{}",
            x.height(),
            x.width(),
            fg.height(),
            fg.width()
        )));
    }
    let c = x.channels();
    let mut sites = Vec::with_capacity(fg.count_ones());
    let mut values = Vec::with_capacity(fg.count_ones() * c);
    for h in 0..x.height() {
        for w in 0..x.width() {
            if fg.get(h, w) {
                sites.push(Site::new(h, w));
                values.extend((0..c).map(|ch| x.get(ch, h, w)));
            }
        }
    }
    Ok(SparseTensor { height: x.height(), width: x.width(), channels: c, sites, values })
}

/// Scatters sites back to a dense grid; inactive pixels take `fill`.
pub fn to_dense<T: Real>(s: &SparseTensor<T>, fill: T) -> DenseTensor<T> {
    let mut out = DenseTensor::filled(s.channels, s.height, s.width, fill);
    for (i, site) in s.sites.iter().enumerate() {
        for (c, &v) in s.site_values(i).iter().enumerate() {
            out.set(c, site.h as usize, site.w as usize, v);
        }
    }
    out
}

/// Foreground mask as the union of instance masks, and the masked features in sparse form.
pub fn suppress_background<T: Real>(x_agg: &DenseTensor<T>, masks: &[BinaryMask]) -> Result<(BinaryMask, SparseTensor<T>)> {
    let (first, rest) = masks.split_first().ok_or(Error::NoInstances)?;
    let mut fg = first.clone();
    for m in rest {
        fg = fg.union(m)?;
    }
    let sparse = to_sparse(x_agg, &fg)?;
    Ok((fg, sparse))
}
