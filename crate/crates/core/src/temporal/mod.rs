//! Flow-based temporal smoothing of logit fields and inter-frame stability metrics.

mod metrics;
mod video;

pub use metrics::{gaussian_window, isi, itf, psnr, ssim, PSNR_CAP, SSIM_SIGMA, SSIM_WINDOW};
pub use video::{
    generate_jitter_video, pair_metrics, read_video, smooth_video, video_metrics, write_video, MetricSpace, PairMetric, SmoothReport, Video,
    VideoConfig, VideoMetrics, VIDEO_FORMAT,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{BinaryMask, DenseTensor};

/// Per-pixel displacement into another frame: channel 0 is horizontal, 1 vertical.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField<T = f32> {
    flow: DenseTensor<T>,
}

impl<T: Real> FlowField<T> {
    pub fn new(flow: DenseTensor<T>) -> Result<Self> {
        if flow.channels() != 2 {
            return Err(Error::ChannelMismatch { expected: 2, got: flow.channels() });
        }
        if !flow.all_finite() {
            return Err(Error::NonFinite("flow"));
        }
        Ok(Self { flow })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { flow: DenseTensor::zeros(2, height, width) }
    }

    /// Same displacement everywhere.
    pub fn constant(height: usize, width: usize, dx: T, dy: T) -> Self {
        Self { flow: DenseTensor::from_fn(2, height, width, |c, _, _| if c == 0 { dx } else { dy }) }
    }

    pub fn tensor(&self) -> &DenseTensor<T> {
        &self.flow
    }

    pub fn height(&self) -> usize {
        self.flow.height()
    }

    pub fn width(&self) -> usize {
        self.flow.width()
    }
}

/// A warped field and the pixels whose sample landed inside the source frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Warped<T = f32> {
    pub field: DenseTensor<T>,
    pub valid: BinaryMask,
}

/// Samples `c` at `p + f(p)` bilinearly; out-of-frame samples are zero and invalid.
pub fn backward_warp<T: Real>(c: &DenseTensor<T>, f: &FlowField<T>) -> Result<Warped<T>> {
    let (ch, h, w) = c.dims();
    if f.height() != h || f.width() != w {
        return Err(Error::shape(format!("flow {}x{} vs field {h}x{w}", f.height(), f.width())));
    }
    let mut out = DenseTensor::zeros(ch, h, w);
    let mut valid = BinaryMask::new(h, w);
    let (max_y, max_x) = (T::lit((h - 1) as f64), T::lit((w - 1) as f64));
    for r in 0..h {
        for col in 0..w {
            let sx = T::lit(col as f64) + f.flow.get(0, r, col);
            let sy = T::lit(r as f64) + f.flow.get(1, r, col);
            if sx < T::zero() || sy < T::zero() || sx > max_x || sy > max_y {
                continue;
            }
            valid.set(r, col, true);
            let (x0, y0) = (sx.floor(), sy.floor());
            let (tx, ty) = (sx - x0, sy - y0);
            let (x0, y0) = (x0.to_usize().unwrap_or(0), y0.to_usize().unwrap_or(0));
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            for k in 0..ch {
                let top = crate::tensor::lerp(c.get(k, y0, x0), c.get(k, y0, x1), tx);
                let bot = crate::tensor::lerp(c.get(k, y1, x0), c.get(k, y1, x1), tx);
                out.set(k, r, col, crate::tensor::lerp(top, bot, ty));
            }
        }
    }
    Ok(Warped { field: out, valid })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub r: usize,
    pub alphas: Vec<f64>,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { r: 2, alphas: vec![0.2; 5] }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.len() != 2 * self.r + 1 {
            return Err(Error::invalid(format!("{} weights for r = {}", self.alphas.len(), self.r)));
        }
        if self.alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::invalid("smoothing weights must be finite and non-negative"));
        }
        if self.alphas[self.r] <= 0.0 {
            return Err(Error::invalid("centre weight must be positive"));
        }
        Ok(())
    }

    /// Weight of offset `j ∈ [−r, r]`.
    pub fn alpha(&self, j: i64) -> f64 {
        self.alphas[(j + self.r as i64) as usize]
    }
}

/// Weighted mean of the centre frame and warped neighbours, renormalized
/// per pixel over the neighbours whose warp stayed in frame.
///
/// Written as `c_t + Σ w_j (c_j − c_t) / Σ w_j` so identical inputs come back unchanged.
pub fn combine_warped<T: Real>(centre: &DenseTensor<T>, centre_alpha: f64, neighbours: &[(f64, Warped<T>)]) -> Result<DenseTensor<T>> {
    let (ch, h, w) = centre.dims();
    for (_, n) in neighbours {
        if n.field.dims() != (ch, h, w) {
            return Err(Error::shape("warped neighbour dims differ from centre frame"));
        }
    }
    let mut out = centre.clone();
    for r in 0..h {
        for col in 0..w {
            let mut total = centre_alpha;
            for (a, n) in neighbours {
                if n.valid.get(r, col) {
                    total += a;
                }
            }
            for k in 0..ch {
                let c0 = centre.get(k, r, col);
                let mut acc = T::zero();
                for (a, n) in neighbours {
                    if n.valid.get(r, col) && *a > 0.0 {
                        acc += T::lit(a / total) * (n.field.get(k, r, col) - c0);
                    }
                }
                out.set(k, r, col, c0 + acc);
            }
        }
    }
    Ok(out)
}

/// Smooths the centre of a `2r + 1` window; `flows[i]` maps the centre to
/// `window[i]` and is ignored at the centre itself.
pub fn temporal_smooth<T: Real>(window: &[DenseTensor<T>], flows: &[FlowField<T>], cfg: &SmoothingConfig) -> Result<DenseTensor<T>> {
    cfg.validate()?;
    let n = 2 * cfg.r + 1;
    if window.len() != n {
        return Err(Error::invalid(format!("window of {} frames, expected {n}", window.len())));
    }
    if flows.len() != 2 * cfg.r {
        return Err(Error::invalid(format!("{} flows, expected {}", flows.len(), 2 * cfg.r)));
    }
    let centre = &window[cfg.r];
    let mut neighbours = Vec::with_capacity(2 * cfg.r);
    let mut flow_iter = flows.iter();
    for (i, frame) in window.iter().enumerate() {
        if i == cfg.r {
            continue;
        }
        let f = flow_iter.next().expect("counted");
        neighbours.push((cfg.alpha(i as i64 - cfg.r as i64), backward_warp(frame, f)?));
    }
    combine_warped(centre, cfg.alpha(0), &neighbours)
}
