use crate::error::{Error, Result};
use crate::real::Real;

use super::DenseTensor;

/// Source coordinate and interpolation weight along one axis, align-corners-false.
#[inline]
fn source_index<T: Real>(dst: usize, in_len: usize, out_len: usize) -> (usize, usize, T) {
    let scale = in_len as f64 / out_len as f64;
    let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
    let i0 = src.floor() as usize;
    let i1 = (i0 + 1).min(in_len - 1);
    (i0, i1, T::lit(src - i0 as f64))
}

/// `a + (b - a)·t`; exact when `a == b`.
#[inline]
pub(crate) fn lerp<T: Real>(a: T, b: T, t: T) -> T {
    a + (b - a) * t
}

/// Bilinear resampling to `out_h × out_w`.
///
/// Output pixel `i` samples the input at `(i + 0.5) * in/out - 0.5`, clamped
/// to the valid range, so edges replicate rather than fade.
pub fn bilinear_resize<T: Real>(t: &DenseTensor<T>, out_h: usize, out_w: usize) -> Result<DenseTensor<T>> {
    if t.height() == 0 || t.width() == 0 || t.channels() == 0 {
        return Err(Error::EmptyTensor);
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid(format!("output size {out_h}x{out_w} must be at least 1x1")));
    }
    if out_h == t.height() && out_w == t.width() {
        return Ok(t.clone());
    }
    let rows: Vec<(usize, usize, T)> = (0..out_h).map(|i| source_index(i, t.height(), out_h)).collect();
    let cols: Vec<(usize, usize, T)> = (0..out_w).map(|j| source_index(j, t.width(), out_w)).collect();
    let mut out = DenseTensor::zeros(t.channels(), out_h, out_w);
    let in_w = t.width();
    for c in 0..t.channels() {
        let src = t.channel(c);
        let dst = out.channel_mut(c);
        for (i, &(h0, h1, fh)) in rows.iter().enumerate() {
            for (j, &(w0, w1, fw)) in cols.iter().enumerate() {
                let top = lerp(src[h0 * in_w + w0], src[h0 * in_w + w1], fw);
                let bottom = lerp(src[h1 * in_w + w0], src[h1 * in_w + w1], fw);
                dst[i * out_w + j] = lerp(top, bottom, fh);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_dims_is_bitwise_identity() {
        let t = DenseTensor::<f32>::from_fn(2, 3, 4, |c, h, w| (c * 100 + h * 10 + w) as f32 * 0.37 - 1.0);
        assert_eq!(bilinear_resize(&t, 3, 4).unwrap(), t);
    }

    #[test]
    fn constant_is_preserved() {
        let t = DenseTensor::<f32>::filled(3, 5, 7, 3.5);
        for (h, w) in [(1, 1), (2, 9), (10, 3), (13, 17)] {
            let r = bilinear_resize(&t, h, w).unwrap();
            assert!(r.data().iter().all(|&v| v == 3.5));
        }
    }

    #[test]
    fn ramp_upsample_matches_hand_evaluation() {
        // Sample centres for 2 -> 4: (i + 0.5) / 2 - 0.5 = -0.25, 0.25, 0.75, 1.25,
        // clamped to 0, 0.25, 0.75, 1. Value = 2 * row + col on the 2x2 ramp.
        let t = DenseTensor::<f64>::from_vec(1, 2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let r = bilinear_resize(&t, 4, 4).unwrap();
        let pos = [0.0, 0.25, 0.75, 1.0];
        for i in 0..4 {
            for j in 0..4 {
                let expected = 2.0 * pos[i] + pos[j];
                assert!((r.get(0, i, j) - expected).abs() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        let t = DenseTensor::<f32>::zeros(1, 0, 3);
        assert!(matches!(bilinear_resize(&t, 2, 2), Err(Error::EmptyTensor)));
        assert_eq!(bilinear_resize(&t, 2, 2).unwrap_err().to_string(), "empty tensor");
    }

    #[test]
    fn downsample_by_two_averages_pairs() {
        let t = DenseTensor::<f64>::from_fn(1, 4, 4, |_, h, w| (h * 4 + w) as f64);
        let r = bilinear_resize(&t, 2, 2).unwrap();
        // centres land at 0.5 and 2.5 on each axis
        assert!((r.get(0, 0, 0) - (0.5 * 4.0 + 0.5)).abs() < 1e-12);
        assert!((r.get(0, 1, 1) - (2.5 * 4.0 + 2.5)).abs() < 1e-12);
    }
}
