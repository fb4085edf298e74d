use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::DenseTensor;

/// PSNR reported for identical frames.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn check_pair<T: Real>(a: &DenseTensor<T>, b: &DenseTensor<T>) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::shape(format!("frame dims {:?} vs {:?}", a.dims(), b.dims())));
    }
    if a.is_empty() {
        return Err(Error::EmptyTensor);
    }
    Ok(())
}

/// `10·log10(peak² / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr<T: Real>(a: &DenseTensor<T>, b: &DenseTensor<T>, peak: f64) -> Result<f64> {
    check_pair(a, b)?;
    if !(peak > 0.0) {
        return Err(Error::invalid(format!("peak {peak} must be positive")));
    }
    let sse: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum();
    let mse = sse / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP))
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of one plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..k).map(|i| g[i] * plane[r * w + c + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..k).map(|i| g[i] * rows[(r + i) * ow + c]).sum();
        }
    }
    out
}

/// Mean local SSIM over all fully contained 11×11 Gaussian windows,
/// averaged over channels.
pub fn ssim<T: Real>(a: &DenseTensor<T>, b: &DenseTensor<T>, peak: f64) -> Result<f64> {
    check_pair(a, b)?;
    if !(peak > 0.0) {
        return Err(Error::invalid(format!("peak {peak} must be positive")));
    }
    let (ch, h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!("frame {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")));
    }
    let g = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let mut total = 0.0;
    for k in 0..ch {
        let x: Vec<f64> = a.channel(k).iter().map(|v| v.as_f64()).collect();
        let y: Vec<f64> = b.channel(k).iter().map(|v| v.as_f64()).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let [mx, my, sxx, syy, sxy] = [&x, &y, &xx, &yy, &xy].map(|p| filter_valid(p, h, w, &g));
        let mut acc = 0.0;
        for i in 0..mx.len() {
            let (ma, mb) = (mx[i], my[i]);
            let va = sxx[i] - ma * ma;
            let vb = syy[i] - mb * mb;
            let cov = sxy[i] - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += acc / mx.len() as f64;
    }
    Ok(total / ch as f64)
}

fn pairwise<T: Real>(frames: &[DenseTensor<T>], f: impl Fn(&DenseTensor<T>, &DenseTensor<T>) -> Result<f64>) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::invalid(format!("{} frames; at least 2 required", frames.len())));
    }
    let mut sum = 0.0;
    for p in frames.windows(2) {
        sum += f(&p[0], &p[1])?;
    }
    Ok(sum / (frames.len() - 1) as f64)
}

/// Mean PSNR over consecutive frame pairs.
pub fn itf<T: Real>(frames: &[DenseTensor<T>], peak: f64) -> Result<f64> {
    pairwise(frames, |a, b| psnr(a, b, peak))
}

/// Mean SSIM over consecutive frame pairs.
pub fn isi<T: Real>(frames: &[DenseTensor<T>], peak: f64) -> Result<f64> {
    pairwise(frames, |a, b| ssim(a, b, peak))
}
