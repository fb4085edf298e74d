//! Global IUV branch model and a plain gradient-descent fit on one scene.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conv::Conv2d;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::scene::Scene;
use crate::sparse::{suppress_background, to_dense, InstanceAssignment, SparseFcn, SparseTensor};
use crate::tensor::{aggregate_pyramid, DenseTensor, FeaturePyramid};

use super::{loss_i, loss_smooth, loss_uv, IuvField, LossWeights, IUV_CHANNELS};

/// Aggregation convs, the sparse residual FCN and the final 1×1 projection to 75 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct IuvModel<T = f32> {
    pub up_convs: Vec<Conv2d<T>>,
    pub fcn: SparseFcn<T>,
    /// 1×1 conv, `width → 75`.
    pub head: Conv2d<T>,
}

impl<T: Real> IuvModel<T> {
    pub fn random(in_channels: usize, width: usize, n_blocks: usize, levels: usize, rng: &mut ChaCha8Rng) -> Self {
        let up_convs = (0..levels).map(|_| Conv2d::random(in_channels, width, 3, 1, 1.0, rng)).collect();
        let fcn = SparseFcn::random(width, n_blocks, 1.0, rng);
        let head = Conv2d::random(width, IUV_CHANNELS, 1, 1, 1.0, rng);
        Self { up_convs, fcn, head }
    }

    pub fn width(&self) -> usize {
        self.head.c_in
    }

    pub fn aggregate(&self, p: &FeaturePyramid<T>) -> Result<DenseTensor<T>> {
        aggregate_pyramid(p, &self.up_convs)
    }

    /// FCN then the 1×1 head, on active sites only.
    pub fn forward_sparse(&self, s: &SparseTensor<T>, assign: &InstanceAssignment) -> Result<SparseTensor<T>> {
        pointwise(&self.fcn.forward(s, assign)?, &self.head)
    }
}

/// 1×1 convolution applied per active site.
pub fn pointwise<T: Real>(s: &SparseTensor<T>, conv: &Conv2d<T>) -> Result<SparseTensor<T>> {
    conv.validate()?;
    if conv.kernel != 1 {
        return Err(Error::invalid("pointwise projection needs a 1x1 kernel"));
    }
    if conv.c_in != s.channels() {
        return Err(Error::ChannelMismatch { expected: conv.c_in, got: s.channels() });
    }
    let mut out = Vec::with_capacity(s.len() * conv.c_out);
    for i in 0..s.len() {
        let x = s.site_values(i);
        for co in 0..conv.c_out {
            let row = &conv.weight[co * conv.c_in..(co + 1) * conv.c_in];
            let mut acc = conv.bias[co];
            for (&w, &v) in row.iter().zip(x) {
                acc += w * v;
            }
            out.push(acc);
        }
    }
    Ok(s.with_values(conv.c_out, out))
}

fn pointwise_backward<T: Real>(s: &SparseTensor<T>, conv: &Conv2d<T>, g: &SparseTensor<T>) -> (SparseTensor<T>, Conv2d<T>) {
    let mut grad_w = Conv2d::zeros(conv.c_in, conv.c_out, 1, 1);
    let mut grad_x = vec![T::zero(); s.len() * conv.c_in];
    for i in 0..s.len() {
        let x = s.site_values(i);
        let gy = g.site_values(i);
        let gx = &mut grad_x[i * conv.c_in..(i + 1) * conv.c_in];
        for co in 0..conv.c_out {
            let d = gy[co];
            grad_w.bias[co] += d;
            let row = &conv.weight[co * conv.c_in..(co + 1) * conv.c_in];
            let grow = &mut grad_w.weight[co * conv.c_in..(co + 1) * conv.c_in];
            for ci in 0..conv.c_in {
                grow[ci] += d * x[ci];
                gx[ci] += d * row[ci];
            }
        }
    }
    (s.with_values(conv.c_in, grad_x), grad_w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub steps: usize,
    pub lr: f64,
    pub width: usize,
    pub blocks: usize,
    /// Seed of the initial weights; independent of the scene seed.
    pub weight_seed: u64,
    pub weights: LossWeights,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            lr: 0.1,
            width: SparseFcn::<f32>::DEFAULT_WIDTH,
            blocks: SparseFcn::<f32>::DEFAULT_BLOCKS,
            weight_seed: 0,
            weights: LossWeights::default(),
        }
    }
}

/// Per-step `L_IUV` and its components, evaluated before each update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub l_iuv: Vec<f64>,
    pub l_i: Vec<f64>,
    pub l_uv: Vec<f64>,
    pub l_s: Vec<f64>,
    pub active_sites: usize,
}

impl FitTrace {
    pub fn initial(&self) -> f64 {
        self.l_iuv.first().copied().unwrap_or(f64::NAN)
    }

    pub fn last(&self) -> f64 {
        self.l_iuv.last().copied().unwrap_or(f64::NAN)
    }
}

/// Fits the FCN, IAN affine parameters and the 1×1 head to the scene's
/// annotated points with ground-truth masks driving background suppression.
pub fn fit_iuv(scene: &Scene, cfg: &FitConfig) -> Result<FitTrace> {
    let (_, trace) = fit_iuv_model(scene, cfg)?;
    Ok(trace)
}

/// As [`fit_iuv`], also returning the fitted model.
pub fn fit_iuv_model(scene: &Scene, cfg: &FitConfig) -> Result<(IuvModel<f32>, FitTrace)> {
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(Error::invalid(format!("learning rate {}", cfg.lr)));
    }
    if cfg.width == 0 || cfg.blocks == 0 {
        return Err(Error::invalid("fit needs width >= 1 and blocks >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.weight_seed);
    let mut model = IuvModel::<f32>::random(scene.pyramid.channels(), cfg.width, cfg.blocks, scene.pyramid.levels().len(), &mut rng);
    let x_agg = model.aggregate(&scene.pyramid)?;
    let (h, w) = (x_agg.height(), x_agg.width());
    let masks = scene.instance_masks_at(h, w)?;
    let (_, s) = suppress_background(&x_agg, &masks)?;
    let assign = InstanceAssignment::from_masks(&s, &masks, None::<&[DenseTensor<f32>]>, false)?;
    let points = scene.points_at_iuv_scale();
    let lr = f32::lit(cfg.lr);
    let lw = cfg.weights;
    let mut trace = FitTrace { l_iuv: vec![], l_i: vec![], l_uv: vec![], l_s: vec![], active_sites: s.len() };
    for step in 0..cfg.steps {
        let tape = model.fcn.forward_train(&s, &assign)?;
        let y = pointwise(tape.output(), &model.head)?;
        let field = IuvField::new(to_dense(&y, 0.0))?;
        let li = loss_i(&field, &points)?;
        let luv = loss_uv(&field, &points)?;
        let ls = loss_smooth(&field, &masks)?;
        let total = li.value as f64 + lw.lambda2 * luv.value as f64 + lw.lambda3 * ls.value as f64;
        if !total.is_finite() || total > 1e6 {
            return Err(Error::Diverged { step, loss: total });
        }
        trace.l_iuv.push(total);
        trace.l_i.push(li.value as f64);
        trace.l_uv.push(luv.value as f64);
        trace.l_s.push(ls.value as f64);
        let (l2, l3) = (f32::lit(lw.lambda2), f32::lit(lw.lambda3));
        let mut g = Vec::with_capacity(y.len() * IUV_CHANNELS);
        for site in y.sites() {
            let (r, c) = (site.h as usize, site.w as usize);
            for ch in 0..IUV_CHANNELS {
                g.push(li.grad.get(ch, r, c) + l2 * luv.grad.get(ch, r, c) + l3 * ls.grad.get(ch, r, c));
            }
        }
        let g = y.with_values(IUV_CHANNELS, g);
        let (g_feat, g_head) = pointwise_backward(tape.output(), &model.head, &g);
        let grads = model.fcn.backward(&tape, &assign, &g_feat)?;
        model.fcn.apply_gradients(&grads, lr);
        for (p, d) in model.head.weight.iter_mut().zip(&g_head.weight) {
            *p -= lr * *d;
        }
        for (p, d) in model.head.bias.iter_mut().zip(&g_head.bias) {
            *p -= lr * *d;
        }
    }
    Ok((model, trace))
}
