//! Instance branch: downsampling convs, relative coordinates, dynamically
//! generated mask heads, and the dice mask losses.

mod dice;
mod head;

pub use dice::{dice_loss, mask_losses, DiceLoss, InstanceTargets, PositiveTarget};
pub use head::{generate_head_params, mask_head_apply, HeadParams, InstancePrediction, WeightGenerator, HEAD_HIDDEN, HEAD_OUT};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conv::{conv2d, relu, Conv2d};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::DenseTensor;

/// Location on the 1/8-scale instance grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridLoc {
    pub h: usize,
    pub w: usize,
}

impl GridLoc {
    pub fn new(h: usize, w: usize) -> Self {
        Self { h, w }
    }
}

/// Three stride-1 3×3 convs and one stride-2 3×3 conv, each followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct DownsampleConv<T = f32> {
    pub layers: [Conv2d<T>; 4],
}

impl<T: Real> DownsampleConv<T> {
    pub fn new(layers: [Conv2d<T>; 4]) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            let want = if i == 3 { 2 } else { 1 };
            if l.kernel != 3 || l.stride != want {
                return Err(Error::invalid(format!("downsample layer {i} must be 3x3 stride {want}")));
            }
        }
        Ok(Self { layers })
    }

    pub fn random(c_in: usize, c_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            layers: [
                Conv2d::random(c_in, c_out, 3, 1, 1.0, rng),
                Conv2d::random(c_out, c_out, 3, 1, 1.0, rng),
                Conv2d::random(c_out, c_out, 3, 1, 1.0, rng),
                Conv2d::random(c_out, c_out, 3, 2, 1.0, rng),
            ],
        }
    }

    pub fn out_channels(&self) -> usize {
        self.layers[3].c_out
    }
}

/// `X_D` at 1/8 scale from `X_agg` at 1/4 scale.
pub fn downsample_conv<T: Real>(x_agg: &DenseTensor<T>, w: &DownsampleConv<T>) -> Result<DenseTensor<T>> {
    let mut x = x_agg.clone();
    for layer in &w.layers {
        x = relu(&conv2d(&x, layer)?);
    }
    Ok(x)
}

/// Two channels of offsets from `location`, normalized by the grid dims.
pub fn rel_coords<T: Real>(height: usize, width: usize, location: GridLoc) -> Result<DenseTensor<T>> {
    if location.h >= height || location.w >= width {
        return Err(Error::invalid(format!("location ({}, {}) outside {height}x{width} grid", location.h, location.w)));
    }
    let (hf, wf) = (height as f64, width as f64);
    Ok(DenseTensor::from_fn(2, height, width, |c, r, col| {
        if c == 0 {
            T::lit((r as f64 - location.h as f64) / hf)
        } else {
            T::lit((col as f64 - location.w as f64) / wf)
        }
    }))
}
