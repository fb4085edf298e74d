//! 75-channel IUV logit fields, their 3-channel summary and the IUV loss stack.

mod fit;
mod loss;
mod total;

pub use fit::{fit_iuv, fit_iuv_model, pointwise, FitConfig, FitTrace, IuvModel};
pub use loss::{loss_i, loss_smooth, loss_uv, LossGrad};
pub use total::{total_loss, FcosHook, LossBreakdown, LossParts, LossWeights, ZeroFcos};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::DenseTensor;

/// Part classes including background (class 0).
pub const N_PARTS: usize = 25;
pub const IUV_CHANNELS: usize = 3 * N_PARTS;
pub const U_OFFSET: usize = N_PARTS;
pub const V_OFFSET: usize = 2 * N_PARTS;

/// Logits laid out `[25 part | 25 U | 25 V]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IuvField<T = f32> {
    logits: DenseTensor<T>,
}

impl<T: Real> IuvField<T> {
    pub fn new(logits: DenseTensor<T>) -> Result<Self> {
        if logits.channels() != IUV_CHANNELS {
            return Err(Error::ChannelMismatch { expected: IUV_CHANNELS, got: logits.channels() });
        }
        Ok(Self { logits })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { logits: DenseTensor::zeros(IUV_CHANNELS, height, width) }
    }

    pub fn logits(&self) -> &DenseTensor<T> {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut DenseTensor<T> {
        &mut self.logits
    }

    pub fn into_logits(self) -> DenseTensor<T> {
        self.logits
    }

    pub fn height(&self) -> usize {
        self.logits.height()
    }

    pub fn width(&self) -> usize {
        self.logits.width()
    }
}

/// One annotated ground-truth correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedPoint {
    pub instance_id: usize,
    /// Column, in pixels of the frame the point refers to.
    pub x: f32,
    /// Row, in pixels.
    pub y: f32,
    /// Body part in `1..=24`.
    pub part: u8,
    pub u: f32,
    pub v: f32,
}

impl AnnotatedPoint {
    pub fn validate(&self) -> Result<()> {
        if !(1..N_PARTS as u8).contains(&self.part) {
            return Err(Error::invalid(format!("point part {} outside 1..=24", self.part)));
        }
        if !(0.0..=1.0).contains(&self.u) || !(0.0..=1.0).contains(&self.v) {
            return Err(Error::invalid(format!("point uv ({}, {}) outside [0, 1]", self.u, self.v)));
        }
        if !(self.x.is_finite() && self.y.is_finite()) || self.x < 0.0 || self.y < 0.0 {
            return Err(Error::invalid(format!("point position ({}, {})", self.x, self.y)));
        }
        Ok(())
    }

    /// Same point in a frame scaled by `factor` (0.25 maps base pixels to 1/4 scale).
    pub fn scaled(&self, factor: f32) -> Self {
        Self { x: self.x * factor, y: self.y * factor, ..*self }
    }

    /// `(row, col)` of the pixel containing the point, if inside `height × width`.
    pub fn pixel(&self, height: usize, width: usize) -> Option<(usize, usize)> {
        let (r, c) = (self.y.floor() as usize, self.x.floor() as usize);
        (self.y >= 0.0 && self.x >= 0.0 && r < height && c < width).then_some((r, c))
    }

    pub(crate) fn checked_pixel(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        self.validate()?;
        self.pixel(height, width)
            .ok_or_else(|| Error::invalid(format!("point ({}, {}) outside {height}x{width}", self.x, self.y)))
    }
}

/// Per-pixel `(part, u, v)` read from the argmax class.
#[derive(Debug, Clone, PartialEq)]
pub struct IuvSummary {
    pub height: usize,
    pub width: usize,
    pub part: Vec<u8>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl IuvSummary {
    #[inline]
    pub fn at(&self, h: usize, w: usize) -> (u8, f64, f64) {
        let i = h * self.width + w;
        (self.part[i], self.u[i], self.v[i])
    }

    /// Keeps only pixels inside `mask`; the rest become background.
    pub fn masked(&self, mask: &crate::tensor::BinaryMask) -> Result<Self> {
        if mask.height() != self.height || mask.width() != self.width {
            return Err(Error::shape("summary and mask dims differ"));
        }
        let mut out = self.clone();
        for (i, &keep) in mask.data().iter().enumerate() {
            if !keep {
                out.part[i] = 0;
                out.u[i] = 0.0;
                out.v[i] = 0.0;
            }
        }
        Ok(out)
    }

    /// Three channels `part / 24, u, v`, all in `[0, 1]`.
    pub fn render<T: Real>(&self) -> DenseTensor<T> {
        let n = self.height * self.width;
        DenseTensor::from_fn(3, self.height, self.width, |c, h, w| {
            let i = h * self.width + w;
            debug_assert!(i < n);
            match c {
                0 => T::lit(self.part[i] as f64 / (N_PARTS - 1) as f64),
                1 => T::lit(self.u[i]),
                _ => T::lit(self.v[i]),
            }
        })
    }
}

/// Argmax part per pixel (ties to the lowest class) with that class's U and V.
pub fn iuv_summarize<T: Real>(c: &IuvField<T>) -> IuvSummary {
    let (h, w) = (c.height(), c.width());
    let n = h * w;
    let data = c.logits.data();
    let mut part = vec![0u8; n];
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    for i in 0..n {
        let mut best = 0usize;
        let mut best_v = data[i];
        for k in 1..N_PARTS {
            let x = data[k * n + i];
            if x > best_v {
                best = k;
                best_v = x;
            }
        }
        part[i] = best as u8;
        if best != 0 {
            u[i] = data[(U_OFFSET + best) * n + i].as_f64();
            v[i] = data[(V_OFFSET + best) * n + i].as_f64();
        }
    }
    IuvSummary { height: h, width: w, part, u, v }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn background_everywhere() {
        let mut f = IuvField::<f32>::zeros(3, 4);
        f.logits_mut().channel_mut(0).fill(5.0);
        f.logits_mut().channel_mut(U_OFFSET).fill(0.7);
        let s = iuv_summarize(&f);
        assert!(s.part.iter().all(|&p| p == 0));
        assert!(s.u.iter().chain(&s.v).all(|&x| x == 0.0));
    }

    #[test]
    fn class_seven_pixel() {
        let mut f = IuvField::<f64>::zeros(2, 2);
        f.logits_mut().set(7, 1, 0, 3.0);
        f.logits_mut().set(U_OFFSET + 7, 1, 0, 0.3);
        f.logits_mut().set(V_OFFSET + 7, 1, 0, 0.6);
        let s = iuv_summarize(&f);
        assert_eq!(s.at(1, 0), (7, 0.3, 0.6));
        // uniform logits tie → class 0
        assert_eq!(s.at(0, 0), (0, 0.0, 0.0));
    }

    #[test]
    fn constant_shift_keeps_part_map() {
        let mut f = IuvField::<f64>::new(DenseTensor::from_fn(IUV_CHANNELS, 3, 3, |c, h, w| ((c * 7 + h * 3 + w * 5) % 11) as f64))
            .unwrap();
        let before = iuv_summarize(&f).part;
        for k in 0..N_PARTS {
            f.logits_mut().channel_mut(k).iter_mut().for_each(|v| *v += 12.5);
        }
        assert_eq!(iuv_summarize(&f).part, before);
    }

    #[test]
    fn rejects_wrong_channel_count() {
        assert!(IuvField::new(DenseTensor::<f32>::zeros(74, 2, 2)).is_err());
    }

    #[test]
    fn point_validation() {
        let p = AnnotatedPoint { instance_id: 0, x: 1.5, y: 2.9, part: 3, u: 0.2, v: 1.0 };
        assert_eq!(p.checked_pixel(4, 4).unwrap(), (2, 1));
        assert!(p.checked_pixel(2, 4).is_err());
        assert!(AnnotatedPoint { part: 0, ..p }.validate().is_err());
        assert!(AnnotatedPoint { part: 25, ..p }.validate().is_err());
        assert!(AnnotatedPoint { u: 1.1, ..p }.validate().is_err());
    }
}
