use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{BinaryMask, DenseTensor};

use super::{AnnotatedPoint, IuvField, IUV_CHANNELS, N_PARTS, U_OFFSET, V_OFFSET};

/// Loss value and its gradient with respect to the 75 logit channels.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T = f32> {
    pub value: T,
    pub grad: DenseTensor<T>,
}

/// Mean softmax cross-entropy of the 25 part logits at each annotated point.
pub fn loss_i<T: Real>(c: &IuvField<T>, points: &[AnnotatedPoint]) -> Result<LossGrad<T>> {
    if points.is_empty() {
        return Err(Error::NoPoints);
    }
    let logits = c.logits();
    let (h, w) = (logits.height(), logits.width());
    let n = T::lit(points.len() as f64);
    let mut grad = DenseTensor::zeros(IUV_CHANNELS, h, w);
    let mut total = T::zero();
    for p in points {
        let (r, col) = p.checked_pixel(h, w)?;
        let z: Vec<T> = (0..N_PARTS).map(|k| logits.get(k, r, col)).collect();
        let m = z.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = z.iter().map(|&v| (v - m).exp()).collect();
        let sum: T = exps.iter().copied().sum();
        let label = p.part as usize;
        total += sum.ln() + m - z[label];
        for (k, &e) in exps.iter().enumerate() {
            let onehot = if k == label { T::one() } else { T::zero() };
            let g = grad.get(k, r, col) + (e / sum - onehot) / n;
            grad.set(k, r, col, g);
        }
    }
    Ok(LossGrad { value: total / n, grad })
}

#[inline]
fn huber<T: Real>(d: T) -> (T, T) {
    if d.abs() < T::one() {
        (T::lit(0.5) * d * d, d)
    } else {
        (d.abs() - T::lit(0.5), d.signum())
    }
}

/// Smooth-L1 (δ = 1) on the ground-truth part's U and V channels, averaged
/// over points and the two components.
pub fn loss_uv<T: Real>(c: &IuvField<T>, points: &[AnnotatedPoint]) -> Result<LossGrad<T>> {
    if points.is_empty() {
        return Err(Error::NoPoints);
    }
    let logits = c.logits();
    let (h, w) = (logits.height(), logits.width());
    let denom = T::lit(2.0 * points.len() as f64);
    let mut grad = DenseTensor::zeros(IUV_CHANNELS, h, w);
    let mut total = T::zero();
    for p in points {
        let (r, col) = p.checked_pixel(h, w)?;
        let part = p.part as usize;
        for (ch, target) in [(U_OFFSET + part, p.u), (V_OFFSET + part, p.v)] {
            let d = logits.get(ch, r, col) - T::lit(target as f64);
            let (l, dl) = huber(d);
            total += l;
            let g = grad.get(ch, r, col) + dl / denom;
            grad.set(ch, r, col, g);
        }
    }
    Ok(LossGrad { value: total / denom, grad })
}

/// Edge-aware smoothness: forward-difference magnitudes of every logit
/// channel, down-weighted by `exp(−|∇M|)` of each instance mask.
///
/// Each direction is averaged over its valid pixels and the 75 channels;
/// the per-instance sums are then averaged over instances.
pub fn loss_smooth<T: Real>(c: &IuvField<T>, masks: &[BinaryMask]) -> Result<LossGrad<T>> {
    if masks.is_empty() {
        return Err(Error::NoInstances);
    }
    let logits = c.logits();
    let (h, w) = (logits.height(), logits.width());
    for m in masks {
        if m.height() != h || m.width() != w {
            return Err(Error::shape(format!("smoothness mask {}x{} vs logits {h}x{w}", m.height(), m.width())));
        }
    }
    let n_inst = T::lit(masks.len() as f64);
    let n_h = (IUV_CHANNELS * h.saturating_sub(1) * w) as f64;
    let n_w = (IUV_CHANNELS * h * w.saturating_sub(1)) as f64;
    let e1 = T::lit((-1.0f64).exp());
    let weight = |a: bool, b: bool| if a == b { T::one() } else { e1 };
    let mut grad = DenseTensor::zeros(IUV_CHANNELS, h, w);
    let mut total = T::zero();
    for m in masks {
        if n_h > 0.0 {
            let norm = T::lit(n_h);
            let mut acc = T::zero();
            for ch in 0..IUV_CHANNELS {
                let src = logits.channel(ch);
                let dst = grad.channel_mut(ch);
                for r in 0..h - 1 {
                    for col in 0..w {
                        let (i0, i1) = (r * w + col, (r + 1) * w + col);
                        let k = weight(m.get(r, col), m.get(r + 1, col));
                        let d = src[i1] - src[i0];
                        acc += d.abs() * k;
                        let g = sign(d) * k / (norm * n_inst);
                        dst[i1] += g;
                        dst[i0] -= g;
                    }
                }
            }
            total += acc / norm;
        }
        if n_w > 0.0 {
            let norm = T::lit(n_w);
            let mut acc = T::zero();
            for ch in 0..IUV_CHANNELS {
                let src = logits.channel(ch);
                let dst = grad.channel_mut(ch);
                for r in 0..h {
                    for col in 0..w - 1 {
                        let (i0, i1) = (r * w + col, r * w + col + 1);
                        let k = weight(m.get(r, col), m.get(r, col + 1));
                        let d = src[i1] - src[i0];
                        acc += d.abs() * k;
                        let g = sign(d) * k / (norm * n_inst);
                        dst[i1] += g;
                        dst[i0] -= g;
                    }
                }
            }
            total += acc / norm;
        }
    }
    Ok(LossGrad { value: total / n_inst, grad })
}

/// Subgradient of |x| with 0 at the kink.
#[inline]
fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}
