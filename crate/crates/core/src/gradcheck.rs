//! Central finite-difference checks of every analytic gradient, in `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::instance::dice_loss;
use crate::iuv::{loss_i, loss_smooth, loss_uv, AnnotatedPoint, IuvField, IUV_CHANNELS, N_PARTS};
use crate::sparse::{ian_backward, ian_forward, ssc_backward, ssc_forward, to_sparse, IanParams, InstanceAssignment, SparseTensor, SscWeights};
use crate::tensor::{BinaryMask, DenseTensor};

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOLERANCE: f64 = 1e-4;

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every coordinate.
pub fn central_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max|a − n| / max(max|a|, max|n|)`; 0 when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
    let scale = analytic.iter().chain(numeric).map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub op: String,
    pub cases: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, p: f64) -> BinaryMask {
    let mut m = BinaryMask::from_fn(h, w, |_, _| rng.gen_bool(p));
    if m.count_ones() == 0 {
        m.set(rng.gen_range(0..h), rng.gen_range(0..w), true);
    }
    m
}

fn random_sparse(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> SparseTensor<f64> {
    let x = DenseTensor::from_fn(c, h, w, |_, _, _| rng.gen_range(-1.0..1.0));
    to_sparse(&x, &random_mask(rng, h, w, 0.7)).expect("matching dims")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Input and weight gradients of a 2→2 submanifold conv on 5×5.
pub fn check_ssc(rng: &mut ChaCha8Rng) -> Result<f64> {
    let s = random_sparse(rng, 5, 5, 2);
    let w = SscWeights::<f64>::random(2, 2, 1.0, rng);
    let up: Vec<f64> = (0..s.len() * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let upstream = s.with_values(2, up.clone());
    let g = ssc_backward(&s, &w, &upstream)?;
    let obj = |s: &SparseTensor<f64>, w: &SscWeights<f64>| dot(ssc_forward(s, w).expect("valid").values(), &up);
    let nx = central_difference(s.values(), FD_STEP, |x| obj(&s.with_values(2, x.to_vec()), &w));
    let mut params = w.kernel.clone();
    params.extend(&w.bias);
    let nw = central_difference(&params, FD_STEP, |p| {
        let mut w2 = w.clone();
        w2.kernel.copy_from_slice(&p[..w.kernel.len()]);
        w2.bias.copy_from_slice(&p[w.kernel.len()..]);
        obj(&s, &w2)
    });
    let mut aw = g.weights.kernel.clone();
    aw.extend(&g.weights.bias);
    Ok(relative_error(g.input.values(), &nx).max(relative_error(&aw, &nw)))
}

/// Input, γ and β gradients of instance-aware normalization, 3 channels, 1–3 instances.
pub fn check_ian(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (h, w, c) = (5, 5, 3);
    let x = DenseTensor::from_fn(c, h, w, |_, _, _| rng.gen_range(-1.0..1.0));
    let n_inst = rng.gen_range(1..=3);
    let masks: Vec<BinaryMask> = (0..n_inst).map(|_| random_mask(rng, h, w, 0.5)).collect();
    let mut fg = masks[0].clone();
    for m in &masks[1..] {
        fg = fg.union(m)?;
    }
    let s = to_sparse(&x, &fg)?;
    let a = InstanceAssignment::from_masks(&s, &masks, None::<&[DenseTensor<f64>]>, false)?;
    let p = IanParams {
        gamma: (0..c).map(|_| rng.gen_range(0.5..1.5)).collect(),
        beta: (0..c).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        epsilon: 1e-5,
    };
    let up: Vec<f64> = (0..s.len() * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g = ian_backward(&s, &a, &p, &s.with_values(c, up.clone()))?;
    let obj = |s: &SparseTensor<f64>, p: &IanParams<f64>| dot(ian_forward(s, &a, p).expect("valid").values(), &up);
    let nx = central_difference(s.values(), FD_STEP, |v| obj(&s.with_values(c, v.to_vec()), &p));
    let mut gb = p.gamma.clone();
    gb.extend(&p.beta);
    let ngb = central_difference(&gb, FD_STEP, |v| {
        let q = IanParams { gamma: v[..c].to_vec(), beta: v[c..].to_vec(), epsilon: p.epsilon };
        obj(&s, &q)
    });
    let mut agb = g.gamma.clone();
    agb.extend(&g.beta);
    Ok(relative_error(g.input.values(), &nx).max(relative_error(&agb, &ngb)))
}

/// Dice gradient on a random 6×6 prediction.
pub fn check_dice(rng: &mut ChaCha8Rng) -> Result<f64> {
    let gt = random_mask(rng, 6, 6, 0.4);
    let pred = DenseTensor::from_fn(1, 6, 6, |_, _, _| rng.gen_range(0.05..0.95));
    let a = dice_loss(&pred, &gt)?;
    let n = central_difference(pred.data(), FD_STEP, |v| {
        dice_loss(&DenseTensor::from_vec(1, 6, 6, v.to_vec()).expect("finite"), &gt).expect("valid").loss
    });
    Ok(relative_error(a.grad.data(), &n))
}

fn random_field(rng: &mut ChaCha8Rng, h: usize, w: usize) -> IuvField<f64> {
    IuvField::new(DenseTensor::from_fn(IUV_CHANNELS, h, w, |_, _, _| rng.gen_range(-2.0..2.0))).expect("75 channels")
}

fn random_points(rng: &mut ChaCha8Rng, h: usize, w: usize, n: usize) -> Vec<AnnotatedPoint> {
    (0..n)
        .map(|_| AnnotatedPoint {
            instance_id: 0,
            x: rng.gen_range(0.0..w as f32 - 0.01),
            y: rng.gen_range(0.0..h as f32 - 0.01),
            part: rng.gen_range(1..N_PARTS as u8),
            u: rng.gen_range(0.0..1.0),
            v: rng.gen_range(0.0..1.0),
        })
        .collect()
}

fn field_fd(c: &IuvField<f64>, f: impl Fn(&IuvField<f64>) -> f64) -> Vec<f64> {
    let (h, w) = (c.height(), c.width());
    central_difference(c.logits().data(), FD_STEP, |v| {
        f(&IuvField::new(DenseTensor::from_vec(IUV_CHANNELS, h, w, v.to_vec()).expect("finite")).expect("75"))
    })
}

pub fn check_loss_i(rng: &mut ChaCha8Rng) -> Result<f64> {
    let c = random_field(rng, 3, 3);
    let pts = random_points(rng, 3, 3, 4);
    let a = loss_i(&c, &pts)?;
    Ok(relative_error(a.grad.data(), &field_fd(&c, |f| loss_i(f, &pts).expect("valid").value)))
}

/// Mixes quadratic and linear Huber branches by drawing UV logits in `[−1.5, 2.5]`.
pub fn check_loss_uv(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut c = random_field(rng, 3, 3);
    for v in c.logits_mut().data_mut() {
        *v = rng.gen_range(-1.5..2.5);
    }
    let pts = random_points(rng, 3, 3, 4);
    let a = loss_uv(&c, &pts)?;
    Ok(relative_error(a.grad.data(), &field_fd(&c, |f| loss_uv(f, &pts).expect("valid").value)))
}

pub fn check_loss_smooth(rng: &mut ChaCha8Rng) -> Result<f64> {
    let c = random_field(rng, 3, 4);
    let masks: Vec<BinaryMask> = (0..rng.gen_range(1..=2)).map(|_| random_mask(rng, 3, 4, 0.5)).collect();
    let a = loss_smooth(&c, &masks)?;
    Ok(relative_error(a.grad.data(), &field_fd(&c, |f| loss_smooth(f, &masks).expect("valid").value)))
}

type Check = fn(&mut ChaCha8Rng) -> Result<f64>;

pub const CHECKS: [(&str, Check); 6] = [
    ("ssc", check_ssc),
    ("ian", check_ian),
    ("dice", check_dice),
    ("loss_i", check_loss_i),
    ("loss_uv", check_loss_uv),
    ("loss_smooth", check_loss_smooth),
];

/// Runs `cases` seeded random cases of every check.
pub fn gradcheck_suite(cases: usize, seed: u64) -> Result<Vec<GradcheckReport>> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(k, (name, check))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64 * 0x9e37_79b9));
            let mut worst: f64 = 0.0;
            for _ in 0..cases {
                worst = worst.max(check(&mut rng)?);
            }
            Ok(GradcheckReport {
                op: (*name).into(),
                cases,
                max_rel_error: worst,
                tolerance: FD_TOLERANCE,
                passed: worst <= FD_TOLERANCE,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_a_few_cases() {
        for r in gradcheck_suite(5, 9).unwrap() {
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn fd_of_quadratic() {
        let g = central_difference(&[1.0, -2.0], 1e-4, |x| x[0] * x[0] + 3.0 * x[1]);
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
    }
}
