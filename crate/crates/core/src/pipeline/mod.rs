//! End-to-end direct pipeline and the top-down timing comparator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conv::{conv2d, relu, Conv2d};
use crate::error::{Error, Result};
use crate::eval::{GtInstance, ScoredInstance};
use crate::instance::{
    downsample_conv, generate_head_params, mask_head_apply, rel_coords, DownsampleConv, HeadParams, InstancePrediction,
    WeightGenerator,
};
use crate::iuv::{iuv_summarize, IuvField, IuvModel};
use crate::real::Real;
use crate::scene::Scene;
use crate::sparse::{suppress_background, to_dense, to_sparse, InstanceAssignment, NormMode, SparseFcn, SscWeights};
use crate::tensor::{bilinear_resize, binarize, BinaryMask, DenseTensor, FeaturePyramid};

/// Which foreground the global IUV branch sees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForegroundMode {
    /// Union of instance masks (background suppression).
    #[default]
    Sparse,
    /// Every pixel active ("w/o Sparse").
    AllOnes,
}

/// Instance masks used for suppression and normalization groups.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskSource {
    /// Thresholded outputs of the dynamic mask heads.
    #[default]
    Predicted,
    /// Scene ground truth, as during training.
    GroundTruth,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub foreground: ForegroundMode,
    pub norm: NormMode,
    pub masks: MaskSource,
}

/// All weights of the direct pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectWeights<T = f32> {
    pub iuv: IuvModel<T>,
    pub downsample: DownsampleConv<T>,
    pub generator: WeightGenerator<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightConfig {
    pub width: usize,
    pub blocks: usize,
    /// Channels of the downsampled instance features `X_D`.
    pub instance_channels: usize,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self { width: SparseFcn::<f32>::DEFAULT_WIDTH, blocks: SparseFcn::<f32>::DEFAULT_BLOCKS, instance_channels: 8 }
    }
}

impl<T: Real> DirectWeights<T> {
    /// Seeded random weights for a pyramid with `in_channels` and `levels`.
    pub fn random(in_channels: usize, levels: usize, cfg: &WeightConfig, seed: u64) -> Result<Self> {
        if cfg.width == 0 || cfg.blocks == 0 || cfg.instance_channels == 0 {
            return Err(Error::invalid("width, blocks and instance_channels must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let iuv = IuvModel::random(in_channels, cfg.width, cfg.blocks, levels, &mut rng);
        let downsample = DownsampleConv::random(cfg.width, cfg.instance_channels, &mut rng);
        let params = HeadParams::<T>::param_count(cfg.instance_channels + 2);
        let generator = WeightGenerator::random(cfg.instance_channels, params, 1.0, &mut rng);
        Ok(Self { iuv, downsample, generator })
    }

    pub fn for_scene(scene: &Scene, cfg: &WeightConfig, seed: u64) -> Result<Self> {
        Self::random(scene.pyramid.channels(), scene.pyramid.levels().len(), cfg, seed)
    }
}

/// Everything `run_direct` produced, including intermediates used by checks.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectOutput<T = f32> {
    pub x_agg: DenseTensor<T>,
    pub instances: Vec<InstancePrediction<T>>,
    /// Instance masks at 1/4 scale (predicted or ground truth per config).
    pub instance_masks: Vec<BinaryMask>,
    pub foreground: BinaryMask,
    pub assignment: InstanceAssignment,
    pub iuv: IuvField<T>,
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub(crate) fn cast_pyramid<T: Real>(p: &FeaturePyramid<f32>) -> Result<FeaturePyramid<T>> {
    let (h, w) = p.base_dims();
    FeaturePyramid::new(h, w, p.levels().iter().map(|l| l.cast()).collect())
}

/// Aggregation → instance branch → suppression → sparse FCN → 1×1 head → dense.
///
/// Instances are generated at the scene's locations; the score of each is
/// the sigmoid of its own instance logit at that location.
pub fn run_direct<T: Real>(scene: &Scene, w: &DirectWeights<T>, cfg: &PipelineConfig) -> Result<DirectOutput<T>> {
    let pyramid = cast_pyramid::<T>(&scene.pyramid)?;
    let x_agg = w.iuv.aggregate(&pyramid)?;
    let x_d = downsample_conv(&x_agg, &w.downsample)?;
    let (gh, gw) = (x_d.height(), x_d.width());
    let head_in = x_d.channels() + 2;
    let instances = scene
        .instances
        .iter()
        .map(|inst| {
            let loc = inst.location;
            let theta = generate_head_params(&x_d, loc, &w.generator, head_in)?;
            let x_tilde = x_d.concat_channels(&rel_coords(gh, gw, loc)?)?;
            let mut pred = mask_head_apply(&x_tilde, &theta, loc, T::zero())?;
            pred.score = sigmoid(pred.m_ins_logits.get(0, loc.h, loc.w));
            Ok(pred)
        })
        .collect::<Result<Vec<_>>>()?;

    let (h, wd) = (x_agg.height(), x_agg.width());
    let (instance_masks, probs) = match cfg.masks {
        MaskSource::Predicted => {
            let probs =
                instances.iter().map(|p| bilinear_resize(&p.m_ins(), h, wd)).collect::<Result<Vec<DenseTensor<T>>>>()?;
            let masks = probs.iter().map(|p| binarize(p, T::lit(0.5))).collect::<Result<Vec<_>>>()?;
            (masks, Some(probs))
        }
        MaskSource::GroundTruth => (scene.instance_masks_at(h, wd)?, None),
    };
    let (foreground, sparse) = match cfg.foreground {
        ForegroundMode::Sparse => suppress_background(&x_agg, &instance_masks)?,
        ForegroundMode::AllOnes => {
            let fg = BinaryMask::ones(h, wd);
            let s = to_sparse(&x_agg, &fg)?;
            (fg, s)
        }
    };
    let background_group = cfg.foreground == ForegroundMode::AllOnes;
    let assignment =
        InstanceAssignment::from_masks(&sparse, &instance_masks, probs.as_deref(), background_group)?.for_mode(cfg.norm);
    let out = w.iuv.forward_sparse(&sparse, &assignment)?;
    let iuv = IuvField::new(to_dense(&out, T::zero()))?;
    Ok(DirectOutput { x_agg, instances, instance_masks, foreground, assignment, iuv })
}

/// Scored, per-instance IUV summaries from a direct run, for evaluation.
pub fn direct_predictions<T: Real>(scene: &Scene, out: &DirectOutput<T>) -> Result<Vec<ScoredInstance>> {
    let summary = iuv_summarize(&out.iuv);
    let scale = (scene.base_h * scene.base_w) as f64 / (summary.height * summary.width) as f64;
    out.instances
        .iter()
        .zip(&out.instance_masks)
        .map(|(p, m)| {
            Ok(ScoredInstance { score: p.score.as_f64(), summary: summary.masked(m)?, area: m.count_ones() as f64 * scale })
        })
        .collect()
}

/// Ground-truth instances with points in the 1/4-scale frame.
pub fn scene_ground_truth(scene: &Scene) -> Vec<GtInstance> {
    let (h, w) = scene.iuv_dims();
    let fy = h as f32 / scene.base_h as f32;
    let fx = w as f32 / scene.base_w as f32;
    scene
        .instances
        .iter()
        .map(|inst| GtInstance {
            points: inst.points.iter().map(|p| crate::iuv::AnnotatedPoint { x: p.x * fx, y: p.y * fy, ..*p }).collect(),
            area: inst.area() as f64,
        })
        .collect()
}

/// Equivalent dense 3×3 convolution of submanifold weights.
pub fn ssc_as_conv2d<T: Real>(w: &SscWeights<T>) -> Conv2d<T> {
    let mut conv = Conv2d::zeros(w.c_in, w.c_out, 3, 1);
    for k in 0..9 {
        for ci in 0..w.c_in {
            for co in 0..w.c_out {
                let i = conv.weight_index(co, ci, k / 3, k % 3);
                conv.weight[i] = w.kernel[w.index(k, ci, co)];
            }
        }
    }
    conv.bias.clone_from(&w.bias);
    conv
}

/// Per-channel normalization over the whole map.
fn dense_norm<T: Real>(x: &DenseTensor<T>, gamma: &[T], beta: &[T], eps: T) -> DenseTensor<T> {
    let mut out = x.clone();
    let n = T::lit(x.plane_len() as f64);
    for c in 0..x.channels() {
        let src = x.channel(c);
        let mean = src.iter().copied().fold(T::zero(), |a, v| a + v) / n;
        let var = src.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
        let inv = (var + eps).sqrt().recip();
        for (o, &v) in out.channel_mut(c).iter_mut().zip(src) {
            *o = (v - mean) * inv * gamma[c] + beta[c];
        }
    }
    out
}

/// The residual FCN and head evaluated densely on one crop, every pixel one group.
pub fn dense_branch<T: Real>(x: &DenseTensor<T>, fcn: &SparseFcn<T>, head: &Conv2d<T>) -> Result<DenseTensor<T>> {
    let convs: Vec<[Conv2d<T>; 3]> = fcn.blocks.iter().map(|b| b.sub.each_ref().map(|s| ssc_as_conv2d(&s.conv))).collect();
    let mut x = x.clone();
    for (b, (block, conv)) in fcn.blocks.iter().zip(&convs).enumerate() {
        let sub = |k: usize, v: &DenseTensor<T>| -> Result<DenseTensor<T>> {
            let n = &block.sub[k].norm;
            Ok(relu(&dense_norm(&conv2d(v, &conv[k])?, &n.gamma, &n.beta, n.epsilon)))
        };
        let skip = sub(1, &sub(0, &x)?)?.add(&x)?;
        x = if b + 1 == fcn.blocks.len() { skip } else { sub(2, &skip)? };
    }
    conv2d(&x, head)
}

/// Top-down comparator: crop each instance's box from `X_agg`, resize to
/// `crop × crop`, and run the same-depth dense branch on every crop.
pub fn run_topdown_sim<T: Real>(scene: &Scene, w: &DirectWeights<T>, crop: usize, parallel: bool) -> Result<Vec<DenseTensor<T>>> {
    if crop == 0 {
        return Err(Error::invalid("crop size must be >= 1"));
    }
    let pyramid = cast_pyramid::<T>(&scene.pyramid)?;
    let x_agg = w.iuv.aggregate(&pyramid)?;
    let masks = scene.instance_masks_at(x_agg.height(), x_agg.width())?;
    let crops = masks
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let (r0, c0, r1, c1) = m.bbox().ok_or_else(|| Error::invalid(format!("instance {i} has an empty box")))?;
            let roi = DenseTensor::from_fn(x_agg.channels(), r1 - r0, c1 - c0, |c, r, col| x_agg.get(c, r0 + r, c0 + col));
            bilinear_resize(&roi, crop, crop)
        })
        .collect::<Result<Vec<_>>>()?;
    let run = |c: &DenseTensor<T>| dense_branch(c, &w.iuv.fcn, &w.iuv.head);
    if parallel {
        crops.par_iter().map(run).collect()
    } else {
        crops.iter().map(run).collect()
    }
}
