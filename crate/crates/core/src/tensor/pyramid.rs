use crate::conv::{conv2d, Conv2d};
use crate::error::{Error, Result};
use crate::real::Real;

use super::{bilinear_resize, DenseTensor};

/// Spatial dims of pyramid level `k` (scale `1 / 2^(k+2)`) for a base resolution.
pub fn pyramid_level_dims(base_h: usize, base_w: usize, level: usize) -> (usize, usize) {
    let f = 1usize << (level + 2);
    (base_h.div_ceil(f), base_w.div_ceil(f))
}

/// Feature maps at 1/4, 1/8, 1/16 and 1/32 of the base resolution.
///
/// Fewer than four levels are allowed; level `k` always sits at scale
/// `1 / 2^(k+2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid<T = f32> {
    base_h: usize,
    base_w: usize,
    levels: Vec<DenseTensor<T>>,
}

impl<T: Real> FeaturePyramid<T> {
    pub const MAX_LEVELS: usize = 4;

    pub fn new(base_h: usize, base_w: usize, levels: Vec<DenseTensor<T>>) -> Result<Self> {
        if levels.is_empty() || levels.len() > Self::MAX_LEVELS {
            return Err(Error::invalid(format!("pyramid needs 1..=4 levels, got {}", levels.len())));
        }
        let channels = levels[0].channels();
        for (k, level) in levels.iter().enumerate() {
            if level.channels() != channels {
                return Err(Error::ChannelMismatch { expected: channels, got: level.channels() });
            }
            let (h, w) = pyramid_level_dims(base_h, base_w, k);
            if level.height() != h || level.width() != w {
                return Err(Error::shape(format!(
                    "level {k} is {}x{}, expected {h}x{w}",
                    level.height(),
                    level.width()
                )));
            }
        }
        Ok(Self { base_h, base_w, levels })
    }

    pub fn base_dims(&self) -> (usize, usize) {
        (self.base_h, self.base_w)
    }

    pub fn levels(&self) -> &[DenseTensor<T>] {
        &self.levels
    }

    pub fn channels(&self) -> usize {
        self.levels[0].channels()
    }

    pub fn into_levels(self) -> Vec<DenseTensor<T>> {
        self.levels
    }
}

/// Sums every level, each passed through its conv and upsampled to 1/4 scale.
///
/// Upsampling runs in factor-2 stages through the intermediate level
/// resolutions, so a 1/32 level is resized three times.
pub fn aggregate_pyramid<T: Real>(p: &FeaturePyramid<T>, up_convs: &[Conv2d<T>]) -> Result<DenseTensor<T>> {
    if up_convs.len() != p.levels.len() {
        return Err(Error::invalid(format!("{} convs for {} levels", up_convs.len(), p.levels.len())));
    }
    let out_channels = up_convs[0].c_out;
    let mut acc: Option<DenseTensor<T>> = None;
    for (k, (level, conv)) in p.levels.iter().zip(up_convs).enumerate() {
        if conv.stride != 1 {
            return Err(Error::invalid("pyramid convs must have stride 1"));
        }
        if conv.c_out != out_channels {
            return Err(Error::ChannelMismatch { expected: out_channels, got: conv.c_out });
        }
        let mut x = conv2d(level, conv)?;
        for stage in (0..k).rev() {
            let (h, w) = pyramid_level_dims(p.base_h, p.base_w, stage);
            x = bilinear_resize(&x, h, w)?;
        }
        acc = Some(match acc {
            None => x,
            Some(a) => a.add(&x)?,
        });
    }
    Ok(acc.expect("at least one level"))
}
