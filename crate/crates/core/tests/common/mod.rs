//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use ddp_core::conv::Conv2d;
use ddp_core::eval::MatchOutcome;
use ddp_core::sparse::{IanParams, SparseFcn, SscWeights};
use ddp_core::DenseTensor;

/// Dense 3×3 zero-padded convolution with `[k][ci][co]` weights, accumulated
/// per output pixel as bias, then taps in raster order, then input channels.
pub fn dense_conv3x3(x: &DenseTensor<f32>, w: &SscWeights<f32>) -> DenseTensor<f32> {
    let (c_in, h, wd) = x.dims();
    assert_eq!(c_in, w.c_in);
    let mut out = DenseTensor::zeros(w.c_out, h, wd);
    let mut y = vec![0f32; w.c_out];
    for r in 0..h {
        for c in 0..wd {
            y.copy_from_slice(&w.bias);
            for k in 0..9 {
                let (nr, nc) = (r as i64 + k as i64 / 3 - 1, c as i64 + k as i64 % 3 - 1);
                if nr < 0 || nc < 0 || nr >= h as i64 || nc >= wd as i64 {
                    continue;
                }
                for ci in 0..c_in {
                    let xv = x.get(ci, nr as usize, nc as usize);
                    for (co, yo) in y.iter_mut().enumerate() {
                        *yo += w.kernel[(k * c_in + ci) * w.c_out + co] * xv;
                    }
                }
            }
            for (co, &v) in y.iter().enumerate() {
                out.set(co, r, c, v);
            }
        }
    }
    out
}

/// Normalizes each labelled region of the grid on its own, biased variance.
pub fn dense_region_norm(x: &DenseTensor<f32>, labels: &[usize], p: &IanParams<f32>) -> DenseTensor<f32> {
    let (ch, h, w) = x.dims();
    let n_labels = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = x.clone();
    for label in 0..n_labels {
        let pix: Vec<usize> = (0..h * w).filter(|&i| labels[i] == label).collect();
        if pix.is_empty() {
            continue;
        }
        let n = pix.len() as f32;
        for c in 0..ch {
            let plane = x.channel(c);
            let mut sum = 0f32;
            for &i in &pix {
                sum += plane[i];
            }
            let mean = sum / n;
            let mut sq = 0f32;
            for &i in &pix {
                let d = plane[i] - mean;
                sq += d * d;
            }
            let inv = (sq / n + p.epsilon).sqrt().recip();
            let dst = out.channel_mut(c);
            for &i in &pix {
                dst[i] = (plane[i] - mean) * inv * p.gamma[c] + p.beta[c];
            }
        }
    }
    out
}

fn relu(x: &DenseTensor<f32>) -> DenseTensor<f32> {
    x.map(|v| v.max(0.0))
}

/// Dense counterpart of the residual FCN: conv → region norm → ReLU per
/// sub-block, skip over the first two, third sub-block dropped in the last block.
pub fn dense_fcn(x: &DenseTensor<f32>, fcn: &SparseFcn<f32>, labels: &[usize]) -> DenseTensor<f32> {
    let mut cur = x.clone();
    for (b, block) in fcn.blocks.iter().enumerate() {
        let sub = |t: &DenseTensor<f32>, i: usize| relu(&dense_region_norm(&dense_conv3x3(t, &block.sub[i].conv), labels, &block.sub[i].norm));
        let t1 = sub(&cur, 0);
        let t2 = sub(&t1, 1);
        let skip = t2.add(&cur).unwrap();
        cur = if b + 1 == fcn.blocks.len() { skip } else { sub(&skip, 2) };
    }
    cur
}

/// 1×1 projection, bias first then input channels in order.
pub fn dense_pointwise(x: &DenseTensor<f32>, conv: &Conv2d<f32>) -> DenseTensor<f32> {
    let (c_in, h, w) = x.dims();
    DenseTensor::from_fn(conv.c_out, h, w, |co, r, c| {
        let mut acc = conv.bias[co];
        for ci in 0..c_in {
            acc += conv.weight[co * c_in + ci] * x.get(ci, r, c);
        }
        acc
    })
}

/// Per-instance normalization by gathering each instance's rows, in f64.
/// `owner[i]` is the group of site `i`; `values` is row-major sites × channels.
pub fn gather_norm(values: &[f64], channels: usize, owner: &[usize], gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    let groups: std::collections::BTreeSet<usize> = owner.iter().copied().collect();
    for g in groups {
        let rows: Vec<usize> = (0..owner.len()).filter(|&i| owner[i] == g).collect();
        for c in 0..channels {
            let col: Vec<f64> = rows.iter().map(|&i| values[i * channels + c]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            for (&i, &v) in rows.iter().zip(&col) {
                out[i * channels + c] = gamma[c] * (v - mean) / (var + eps).sqrt() + beta[c];
            }
        }
    }
    out
}

/// Central differences, one coordinate at a time.
pub fn numeric_grad(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max|a − n| / max(1, max|n|)`.
pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let scale = n.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(n).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Exhaustive matching at one threshold: among every injective assignment of
/// predictions to ground truths with GPS ≥ τ, the one whose GPS sequence in
/// score order is lexicographically largest (unmatched counts as 0).
pub fn brute_force_outcomes(gps: &[Vec<f64>], scores: &[f64], tau: f64) -> Vec<MatchOutcome> {
    let n_p = gps.len();
    let n_g = gps.first().map_or(0, Vec::len);
    let mut order: Vec<usize> = (0..n_p).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut best: Option<Vec<f64>> = None;
    let mut best_matched = vec![false; n_p];
    let mut choice = vec![0; n_p];
    loop {
        let mut used = vec![false; n_g];
        let mut ok = true;
        for &g in &choice {
            if g < n_g {
                if used[g] {
                    ok = false;
                    break;
                }
                used[g] = true;
            }
        }
        if ok {
            let seq: Vec<f64> = order.iter().map(|&p| if choice[p] < n_g { gps[p][choice[p]] } else { 0.0 }).collect();
            let valid = order.iter().all(|&p| choice[p] == n_g || gps[p][choice[p]] >= tau);
            if valid && best.as_ref().map_or(true, |b| seq.iter().zip(b).find(|(x, y)| x != y).map_or(false, |(x, y)| x > y)) {
                best_matched = order.iter().map(|&p| choice[p] < n_g).collect();
                best = Some(seq);
            }
        }
        // odometer over {0..n_g} per prediction
        let mut i = 0;
        while i < n_p {
            choice[i] += 1;
            if choice[i] <= n_g {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
        if i == n_p {
            break;
        }
    }
    best_matched.into_iter().map(|m| if m { MatchOutcome::True } else { MatchOutcome::False }).collect()
}

/// Area under the stepwise precision envelope, with recall from TP/FP counts.
pub fn reference_ap(outcomes: &[MatchOutcome], n_gt: usize) -> (f64, f64) {
    let mut pts = Vec::new();
    let (mut tp, mut fp) = (0.0, 0.0);
    for o in outcomes {
        if *o == MatchOutcome::True {
            tp += 1.0
        } else {
            fp += 1.0
        }
        pts.push((tp / n_gt as f64, tp / (tp + fp)));
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (i, &(r, _)) in pts.iter().enumerate() {
        let env = pts[i..].iter().map(|p| p.1).fold(0.0, f64::max);
        ap += (r - prev) * env;
        prev = r;
    }
    (ap, tp / n_gt as f64)
}

/// SSIM of one window evaluated straight from its definition.
pub fn ssim_window(a: &[f64], b: &[f64], weights: &[f64], peak: f64) -> f64 {
    let (c1, c2) = ((0.01 * peak).powi(2), (0.03 * peak).powi(2));
    let mu_a: f64 = a.iter().zip(weights).map(|(x, w)| x * w).sum();
    let mu_b: f64 = b.iter().zip(weights).map(|(x, w)| x * w).sum();
    let var_a: f64 = a.iter().zip(weights).map(|(x, w)| w * (x - mu_a).powi(2)).sum();
    let var_b: f64 = b.iter().zip(weights).map(|(x, w)| w * (x - mu_b).powi(2)).sum();
    let cov: f64 = a.iter().zip(b).zip(weights).map(|((x, y), w)| w * (x - mu_a) * (y - mu_b)).sum();
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// Mean SSIM over channels and every fully-inside 11×11 window.
pub fn reference_ssim(a: &DenseTensor<f64>, b: &DenseTensor<f64>, peak: f64) -> f64 {
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp()).collect();
    let s: f64 = g.iter().sum();
    let w2: Vec<f64> = (0..121).map(|k| g[k / 11] * g[k % 11] / (s * s)).collect();
    let (ch, h, w) = a.dims();
    let mut total = 0.0;
    let mut n = 0usize;
    for c in 0..ch {
        for r in 0..=h - 11 {
            for col in 0..=w - 11 {
                let pa: Vec<f64> = (0..121).map(|k| a.get(c, r + k / 11, col + k % 11)).collect();
                let pb: Vec<f64> = (0..121).map(|k| b.get(c, r + k / 11, col + k % 11)).collect();
                total += ssim_window(&pa, &pb, &w2, peak);
                n += 1;
            }
        }
    }
    total / n as f64
}

/// Bilinear sample at continuous `(y, x)` with border clamping.
pub fn sample_clamped(t: &DenseTensor<f64>, c: usize, y: f64, x: f64) -> f64 {
    let (h, w) = (t.height() as f64, t.width() as f64);
    let y = y.clamp(0.0, h - 1.0);
    let x = x.clamp(0.0, w - 1.0);
    let (y0, x0) = (y.floor(), x.floor());
    let (y1, x1) = ((y0 + 1.0).min(h - 1.0), (x0 + 1.0).min(w - 1.0));
    let (fy, fx) = (y - y0, x - x0);
    let v = |yy: f64, xx: f64| t.get(c, yy as usize, xx as usize);
    (1.0 - fy) * ((1.0 - fx) * v(y0, x0) + fx * v(y0, x1)) + fy * ((1.0 - fx) * v(y1, x0) + fx * v(y1, x1))
}

/// Align-corners-false resize from the sampling formula.
pub fn reference_resize(t: &DenseTensor<f64>, oh: usize, ow: usize) -> DenseTensor<f64> {
    let sy = t.height() as f64 / oh as f64;
    let sx = t.width() as f64 / ow as f64;
    DenseTensor::from_fn(t.channels(), oh, ow, |c, i, j| sample_clamped(t, c, (i as f64 + 0.5) * sy - 0.5, (j as f64 + 0.5) * sx - 0.5))
}
