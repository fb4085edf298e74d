//! Dense 2D convolution (cross-correlation) with zero padding.

use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::DenseTensor;

/// Square-kernel convolution layer; weights laid out `[c_out][c_in][kh][kw]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T = f32> {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn zeros(c_in: usize, c_out: usize, kernel: usize, stride: usize) -> Self {
        Self { c_in, c_out, kernel, stride, weight: vec![T::zero(); c_out * c_in * kernel * kernel], bias: vec![T::zero(); c_out] }
    }

    /// Identity mapping of channel `i` to channel `i` through the kernel centre.
    pub fn delta(channels: usize, kernel: usize, stride: usize) -> Self {
        let mut conv = Self::zeros(channels, channels, kernel, stride);
        let centre = kernel / 2;
        for c in 0..channels {
            let i = conv.weight_index(c, c, centre, centre);
            conv.weight[i] = T::one();
        }
        conv
    }

    /// Uniform weights in `±scale / sqrt(fan_in)`, small uniform bias.
    pub fn random(c_in: usize, c_out: usize, kernel: usize, stride: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let bound = scale / ((c_in * kernel * kernel) as f64).sqrt();
        let weight = (0..c_out * c_in * kernel * kernel).map(|_| T::lit(rng.gen_range(-bound..bound))).collect();
        let bias = (0..c_out).map(|_| T::lit(rng.gen_range(-0.1 * scale..0.1 * scale))).collect();
        Self { c_in, c_out, kernel, stride, weight, bias }
    }

    #[inline]
    pub fn weight_index(&self, co: usize, ci: usize, kh: usize, kw: usize) -> usize {
        ((co * self.c_in + ci) * self.kernel + kh) * self.kernel + kw
    }

    pub fn output_dims(&self, height: usize, width: usize) -> (usize, usize) {
        let pad = self.kernel / 2;
        ((height + 2 * pad - self.kernel) / self.stride + 1, (width + 2 * pad - self.kernel) / self.stride + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.kernel % 2 == 0 || self.stride == 0 {
            return Err(Error::invalid(format!("kernel {} stride {}", self.kernel, self.stride)));
        }
        if self.weight.len() != self.c_out * self.c_in * self.kernel * self.kernel || self.bias.len() != self.c_out {
            return Err(Error::shape("conv weight/bias length"));
        }
        Ok(())
    }

    pub fn forward(&self, x: &DenseTensor<T>) -> Result<DenseTensor<T>> {
        conv2d(x, self)
    }
}

/// Zero-padded convolution with padding `kernel / 2`.
pub fn conv2d<T: Real>(x: &DenseTensor<T>, conv: &Conv2d<T>) -> Result<DenseTensor<T>> {
    conv.validate()?;
    if x.channels() != conv.c_in {
        return Err(Error::ChannelMismatch { expected: conv.c_in, got: x.channels() });
    }
    if x.height() == 0 || x.width() == 0 {
        return Err(Error::EmptyTensor);
    }
    let (in_h, in_w) = (x.height(), x.width());
    let (out_h, out_w) = conv.output_dims(in_h, in_w);
    let pad = conv.kernel as isize / 2;
    let stride = conv.stride;
    let mut out = DenseTensor::zeros(conv.c_out, out_h, out_w);
    for co in 0..conv.c_out {
        let dst = out.channel_mut(co);
        dst.fill(conv.bias[co]);
        for ci in 0..conv.c_in {
            let src = x.channel(ci);
            for kh in 0..conv.kernel {
                for kw in 0..conv.kernel {
                    let wv = conv.weight[conv.weight_index(co, ci, kh, kw)];
                    if wv == T::zero() {
                        continue;
                    }
                    let dh = kh as isize - pad;
                    let dw = kw as isize - pad;
                    // output columns whose input column lies inside the frame
                    let ow_lo = ((-dw).max(0) as usize).div_ceil(stride);
                    let ow_hi = {
                        let limit = in_w as isize - dw; // need ow*stride < limit
                        if limit <= 0 {
                            0
                        } else {
                            (((limit - 1) as usize) / stride + 1).min(out_w)
                        }
                    };
                    for oh in 0..out_h {
                        let ih = (oh * stride) as isize + dh;
                        if ih < 0 || ih >= in_h as isize {
                            continue;
                        }
                        let row = &src[ih as usize * in_w..(ih as usize + 1) * in_w];
                        let out_row = &mut dst[oh * out_w..(oh + 1) * out_w];
                        if stride == 1 {
                            for ow in ow_lo..ow_hi {
                                out_row[ow] += wv * row[(ow as isize + dw) as usize];
                            }
                        } else {
                            for ow in ow_lo..ow_hi {
                                out_row[ow] += wv * row[((ow * stride) as isize + dw) as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn relu<T: Real>(x: &DenseTensor<T>) -> DenseTensor<T> {
    x.map(|v| v.max(T::zero()))
}
