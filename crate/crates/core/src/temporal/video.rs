use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::iuv::{iuv_summarize, IuvField, IUV_CHANNELS};
use crate::scene::{generate_scene, SceneConfig};
use crate::tensor::{read_tensor, write_tensor, DenseTensor};

use super::metrics::{psnr, ssim};
use super::{backward_warp, combine_warped, FlowField, SmoothingConfig};

pub const VIDEO_FORMAT: &str = "ddp-video";
const VIDEO_VERSION: u32 = 1;
const MANIFEST_NAME: &str = "video.json";

/// Logit frames plus flows keyed by `(t, j)`, mapping frame `t` into frame `t + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub frames: Vec<DenseTensor<f32>>,
    pub flows: BTreeMap<(usize, i64), FlowField<f32>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VideoManifest {
    format: String,
    version: u32,
    frames: Vec<String>,
    flows: Vec<FlowRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowRecord {
    t: usize,
    j: i64,
    path: String,
}

fn manifest_err(field: impl Into<String>, reason: impl Into<String>) -> Error {
    FormatError::Manifest { field: field.into(), reason: reason.into() }.into()
}

fn blob_path(dir: &Path, rel: &str, field: &str) -> Result<PathBuf> {
    let p = Path::new(rel);
    if rel.is_empty() || p.components().any(|c| !matches!(c, std::path::Component::Normal(_))) {
        return Err(manifest_err(field, format!("path `{rel}` must be relative and inside the video directory")));
    }
    Ok(dir.join(p))
}

pub fn write_video(video: &Video, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut frames = Vec::new();
    for (t, f) in video.frames.iter().enumerate() {
        let name = format!("frame_{t:04}.ddpt");
        write_tensor(f, dir.join(&name))?;
        frames.push(name);
    }
    let mut flows = Vec::new();
    for (&(t, j), f) in &video.flows {
        let path = format!("flow_{t:04}_{j:+}.ddpt");
        write_tensor(f.tensor(), dir.join(&path))?;
        flows.push(FlowRecord { t, j, path });
    }
    let m = VideoManifest { format: VIDEO_FORMAT.into(), version: VIDEO_VERSION, frames, flows };
    let path = dir.join(MANIFEST_NAME);
    fs::write(&path, serde_json::to_vec_pretty(&m)?)?;
    Ok(path)
}

/// Reads a video directory or its `video.json`.
pub fn read_video(path: impl AsRef<Path>) -> Result<Video> {
    let path = path.as_ref();
    let (dir, file) = if path.is_dir() { (path.to_path_buf(), path.join(MANIFEST_NAME)) } else {
        (path.parent().map(Path::to_path_buf).unwrap_or_default(), path.to_path_buf())
    };
    let m: VideoManifest = serde_json::from_slice(&fs::read(file)?)?;
    if m.format != VIDEO_FORMAT {
        return Err(manifest_err("format", format!("expected `{VIDEO_FORMAT}`, found `{}`", m.format)));
    }
    if m.version != VIDEO_VERSION {
        return Err(manifest_err("version", format!("unsupported version {}", m.version)));
    }
    let frames = m
        .frames
        .iter()
        .enumerate()
        .map(|(t, rel)| read_tensor::<f32>(blob_path(&dir, rel, &format!("frames[{t}]"))?))
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = frames.first() {
        if frames.iter().any(|f| !f.same_dims(first)) {
            return Err(manifest_err("frames", "frame dims differ"));
        }
    }
    let mut flows = BTreeMap::new();
    for (k, rec) in m.flows.iter().enumerate() {
        let field = format!("flows[{k}]");
        let target = rec.t as i64 + rec.j;
        if rec.t >= frames.len() || target < 0 || target >= frames.len() as i64 || rec.j == 0 {
            return Err(manifest_err(field, format!("(t={}, j={}) outside the sequence", rec.t, rec.j)));
        }
        let flow = FlowField::new(read_tensor::<f32>(blob_path(&dir, &rec.path, &field)?)?)?;
        if flow.height() != frames[rec.t].height() || flow.width() != frames[rec.t].width() {
            return Err(manifest_err(field, "flow dims differ from frames"));
        }
        if flows.insert((rec.t, rec.j), flow).is_some() {
            return Err(manifest_err(field, "duplicate (t, j)"));
        }
    }
    Ok(Video { frames, flows })
}

/// Where ITF/ISI are measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricSpace {
    /// Rendered 3-channel summaries (part/24, U, V), peak 1.
    #[default]
    Rendered,
    /// Raw logits, peak = value range over the whole sequence.
    Logits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoMetrics {
    pub itf: f64,
    pub isi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMetric {
    pub t: usize,
    pub psnr: f64,
    pub ssim: f64,
}

fn metric_frames(frames: &[DenseTensor<f32>], space: MetricSpace) -> Result<(Vec<DenseTensor<f64>>, f64)> {
    match space {
        MetricSpace::Rendered => {
            let r = frames
                .iter()
                .map(|f| Ok(iuv_summarize(&IuvField::new(f.clone())?).render::<f64>()))
                .collect::<Result<Vec<_>>>()?;
            Ok((r, 1.0))
        }
        MetricSpace::Logits => {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in frames.iter().flat_map(|f| f.data()) {
                lo = lo.min(*v as f64);
                hi = hi.max(*v as f64);
            }
            let peak = if hi > lo { hi - lo } else { 1.0 };
            Ok((frames.iter().map(|f| f.cast()).collect(), peak))
        }
    }
}

/// PSNR and SSIM of every consecutive pair `(t, t + 1)`.
pub fn pair_metrics(frames: &[DenseTensor<f32>], space: MetricSpace) -> Result<Vec<PairMetric>> {
    if frames.len() < 2 {
        return Err(Error::invalid(format!("{} frames; at least 2 required", frames.len())));
    }
    let (m, peak) = metric_frames(frames, space)?;
    m.windows(2)
        .enumerate()
        .map(|(t, p)| Ok(PairMetric { t, psnr: psnr(&p[0], &p[1], peak)?, ssim: ssim(&p[0], &p[1], peak)? }))
        .collect()
}

pub fn video_metrics(frames: &[DenseTensor<f32>], space: MetricSpace) -> Result<VideoMetrics> {
    let pairs = pair_metrics(frames, space)?;
    let n = pairs.len() as f64;
    Ok(VideoMetrics {
        itf: pairs.iter().map(|p| p.psnr).sum::<f64>() / n,
        isi: pairs.iter().map(|p| p.ssim).sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothReport {
    pub frames: Vec<DenseTensor<f32>>,
    pub before: VideoMetrics,
    pub after: VideoMetrics,
    pub pairs_before: Vec<PairMetric>,
    pub pairs_after: Vec<PairMetric>,
}

/// Smooths every frame; windows shrink at the sequence ends and the
/// remaining weights are renormalized.
pub fn smooth_video(video: &Video, cfg: &SmoothingConfig, space: MetricSpace) -> Result<SmoothReport> {
    cfg.validate()?;
    let n = video.frames.len();
    if n < 2 * cfg.r + 1 {
        return Err(Error::invalid(format!("{n} frames; at least {} required", 2 * cfg.r + 1)));
    }
    let r = cfg.r as i64;
    let frames = (0..n)
        .into_par_iter()
        .map(|t| {
            let mut neighbours = Vec::new();
            for j in -r..=r {
                let target = t as i64 + j;
                if j == 0 || target < 0 || target >= n as i64 {
                    continue;
                }
                let flow = video.flows.get(&(t, j)).ok_or(Error::MissingFlow { t, j })?;
                neighbours.push((cfg.alpha(j), backward_warp(&video.frames[target as usize], flow)?));
            }
            combine_warped(&video.frames[t], cfg.alpha(0), &neighbours)
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs_before = pair_metrics(&video.frames, space)?;
    let pairs_after = pair_metrics(&frames, space)?;
    Ok(SmoothReport {
        before: video_metrics(&video.frames, space)?,
        after: video_metrics(&frames, space)?,
        frames,
        pairs_before,
        pairs_after,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VideoConfig {
    pub frames: usize,
    pub scene: SceneConfig,
    /// Per-frame integer translation of the content, in IUV pixels.
    pub shift_x: i64,
    pub shift_y: i64,
    /// Amplitude of uniform per-frame logit noise.
    pub jitter: f64,
    /// Logit margin of the true class in the clean field.
    pub margin: f64,
    /// Flows are emitted for all `|j| ≤ r`.
    pub r: usize,
}

impl Default for VideoConfig {
    fn default() -> Self {
        Self {
            frames: 8,
            scene: SceneConfig { n_instances: 2, sparsity: 0.3, base_h: 128, base_w: 128, ..Default::default() },
            shift_x: 1,
            shift_y: 0,
            jitter: 1.0,
            margin: 2.0,
            r: 2,
        }
    }
}

/// Translating scene rendered as clean logits, plus per-frame uniform noise;
/// flows are the exact translations.
pub fn generate_jitter_video(seed: u64, cfg: &VideoConfig) -> Result<Video> {
    if cfg.frames < 2 {
        return Err(Error::invalid("video needs at least 2 frames"));
    }
    if !(cfg.jitter >= 0.0 && cfg.jitter.is_finite()) {
        return Err(Error::invalid(format!("jitter {}", cfg.jitter)));
    }
    let scene = generate_scene(seed, &cfg.scene)?;
    let (h, w) = scene.iuv_dims();
    let clean = scene.gt_logits::<f32>(h, w, cfg.margin)?.into_logits();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1e1d);
    let margin = cfg.margin as f32;
    let jitter = cfg.jitter as f32;
    let frames = (0..cfg.frames)
        .map(|t| {
            let (oy, ox) = (t as i64 * cfg.shift_y, t as i64 * cfg.shift_x);
            DenseTensor::from_fn(IUV_CHANNELS, h, w, |c, r, col| {
                let (sr, sc) = (r as i64 - oy, col as i64 - ox);
                let base = if sr >= 0 && sc >= 0 && sr < h as i64 && sc < w as i64 {
                    clean.get(c, sr as usize, sc as usize)
                } else if c == 0 {
                    margin
                } else {
                    0.0
                };
                base + if jitter > 0.0 { rng.gen_range(-jitter..jitter) } else { 0.0 }
            })
        })
        .collect();
    let mut flows = BTreeMap::new();
    for t in 0..cfg.frames {
        for j in -(cfg.r as i64)..=cfg.r as i64 {
            let target = t as i64 + j;
            if j != 0 && target >= 0 && target < cfg.frames as i64 {
                let f = FlowField::constant(h, w, (j * cfg.shift_x) as f32, (j * cfg.shift_y) as f32);
                flows.insert((t, j), f);
            }
        }
    }
    Ok(Video { frames, flows })
}
