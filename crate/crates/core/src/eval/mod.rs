//! Dense-pose evaluation: per-instance point similarity and GPS-thresholded AP/AR.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iuv::{AnnotatedPoint, IuvSummary};

/// Similarity of a predicted `(part, u, v)` to an annotated point, in `[0, 1]`.
pub trait PointSimilarity: Sync {
    fn similarity(&self, pred: (u8, f64, f64), gt: &AnnotatedPoint) -> f64;
}

impl<F: Fn((u8, f64, f64), &AnnotatedPoint) -> f64 + Sync> PointSimilarity for F {
    fn similarity(&self, pred: (u8, f64, f64), gt: &AnnotatedPoint) -> f64 {
        self(pred, gt)
    }
}

/// Gaussian `exp(−d²/(2κ²))` of the UV distance when parts agree, 0 otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsConfig {
    pub kappa: f64,
}

impl GpsConfig {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::invalid(format!("kappa {kappa} must be positive")));
        }
        Ok(Self { kappa })
    }
}

impl PointSimilarity for GpsConfig {
    fn similarity(&self, (part, u, v): (u8, f64, f64), gt: &AnnotatedPoint) -> f64 {
        if part != gt.part {
            return 0.0;
        }
        let d2 = (u - gt.u as f64).powi(2) + (v - gt.v as f64).powi(2);
        (-d2 / (2.0 * self.kappa * self.kappa)).exp()
    }
}

/// Mean similarity over the instance's points; points are in the summary's pixel frame.
pub fn instance_gps(pred: &IuvSummary, gt_points: &[AnnotatedPoint], sim: &dyn PointSimilarity) -> Result<f64> {
    if gt_points.is_empty() {
        return Err(Error::NoPoints);
    }
    let mut sum = 0.0;
    for p in gt_points {
        let (r, c) = p.checked_pixel(pred.height, pred.width)?;
        sum += sim.similarity(pred.at(r, c), p);
    }
    Ok(sum / gt_points.len() as f64)
}

pub const GPS_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// A scored predicted instance: its IUV summary (background outside the
/// instance) and pixel area at base resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredInstance {
    pub score: f64,
    pub summary: IuvSummary,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtInstance {
    /// Points in the frame of the prediction summaries.
    pub points: Vec<AnnotatedPoint>,
    /// Pixel area at base resolution.
    pub area: f64,
}

/// Medium/large split boundaries in base pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaRanges {
    pub medium_min: f64,
    pub large_min: f64,
}

impl AreaRanges {
    /// 32² and 96² at 640×480, scaled by frame area.
    pub fn for_base(height: usize, width: usize) -> Self {
        let s = (height * width) as f64 / (640.0 * 480.0);
        Self { medium_min: 32.0 * 32.0 * s, large_min: 96.0 * 96.0 * s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Split {
    All,
    Medium,
    Large,
}

impl AreaRanges {
    fn contains(&self, split: Split, area: f64) -> bool {
        match split {
            Split::All => true,
            Split::Medium => area >= self.medium_min && area < self.large_min,
            Split::Large => area >= self.large_min,
        }
    }
}

/// Summary metrics; area splits are `None` when no ground truth falls in the range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ap_m: Option<f64>,
    pub ap_l: Option<f64>,
    pub ar: f64,
    pub ar50: f64,
    pub ar75: f64,
    pub ar_m: Option<f64>,
    pub ar_l: Option<f64>,
}

/// One row of the per-threshold breakdown (all areas).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub ap: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    pub n_gt: usize,
}

/// Outcome of each prediction, in descending score order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    True,
    False,
    Ignored,
}

/// Prediction indices by descending score, ties by index.
pub fn score_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Greedy matching at one threshold. `gps[p][g]`; ignored GTs absorb
/// matches without counting, and unmatched ignored predictions are dropped.
pub fn greedy_match(
    gps: &[Vec<f64>],
    order: &[usize],
    tau: f64,
    gt_ignored: &[bool],
    pred_ignored: &[bool],
) -> Vec<MatchOutcome> {
    let n_gt = gt_ignored.len();
    let mut taken = vec![false; n_gt];
    let mut out = Vec::with_capacity(order.len());
    for &p in order {
        let best = |ignored: bool| {
            let mut best: Option<(usize, f64)> = None;
            for g in 0..n_gt {
                if taken[g] || gt_ignored[g] != ignored || gps[p][g] < tau {
                    continue;
                }
                if best.map_or(true, |(_, b)| gps[p][g] > b) {
                    best = Some((g, gps[p][g]));
                }
            }
            best
        };
        if let Some((g, _)) = best(false) {
            taken[g] = true;
            out.push(MatchOutcome::True);
        } else if let Some((g, _)) = best(true) {
            taken[g] = true;
            out.push(MatchOutcome::Ignored);
        } else if pred_ignored[p] {
            out.push(MatchOutcome::Ignored);
        } else {
            out.push(MatchOutcome::False);
        }
    }
    out
}

/// All-point interpolated area under the precision-recall curve, and final recall.
pub fn ap_from_outcomes(outcomes: &[MatchOutcome], n_gt: usize) -> (f64, f64) {
    if n_gt == 0 {
        return (0.0, 0.0);
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut recall = Vec::new();
    let mut precision = Vec::new();
    for o in outcomes {
        match o {
            MatchOutcome::True => tp += 1,
            MatchOutcome::False => fp += 1,
            MatchOutcome::Ignored => continue,
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev_r) * p;
        prev_r = *r;
    }
    (ap, tp as f64 / n_gt as f64)
}

/// GPS of every prediction against every ground truth.
pub fn gps_matrix(preds: &[ScoredInstance], gts: &[GtInstance], sim: &dyn PointSimilarity) -> Result<Vec<Vec<f64>>> {
    preds
        .iter()
        .map(|p| gts.iter().map(|g| instance_gps(&p.summary, &g.points, sim)).collect())
        .collect()
}

/// AP/AR from a precomputed GPS matrix `gps[pred][gt]`.
pub fn sweep(gps: &[Vec<f64>], scores: &[f64], pred_areas: &[f64], gt_areas: &[f64], ranges: AreaRanges) -> Result<EvalResult> {
    Ok(sweep_detailed(gps, scores, pred_areas, gt_areas, ranges)?.0)
}

fn sweep_detailed(
    gps: &[Vec<f64>],
    scores: &[f64],
    pred_areas: &[f64],
    gt_areas: &[f64],
    ranges: AreaRanges,
) -> Result<(EvalResult, Vec<ThresholdRow>)> {
    if gps.len() != scores.len() || scores.len() != pred_areas.len() || gps.iter().any(|r| r.len() != gt_areas.len()) {
        return Err(Error::shape("GPS matrix dims differ from prediction/ground-truth counts"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("prediction score"));
    }
    let order = score_order(scores);
    let mut rows = Vec::new();
    let mut per_split = |split: Split, record: bool| -> (Option<Vec<f64>>, Vec<f64>) {
        let gt_ignored: Vec<bool> = gt_areas.iter().map(|&a| !ranges.contains(split, a)).collect();
        let pred_ignored: Vec<bool> = pred_areas.iter().map(|&a| !ranges.contains(split, a)).collect();
        let n_gt = gt_ignored.iter().filter(|i| !**i).count();
        if n_gt == 0 {
            return (None, vec![]);
        }
        let mut aps = Vec::new();
        let mut recalls = Vec::new();
        for &tau in &GPS_THRESHOLDS {
            let out = greedy_match(gps, &order, tau, &gt_ignored, &pred_ignored);
            let (ap, rec) = ap_from_outcomes(&out, n_gt);
            if record {
                rows.push(ThresholdRow {
                    threshold: tau,
                    ap,
                    recall: rec,
                    tp: out.iter().filter(|o| **o == MatchOutcome::True).count(),
                    fp: out.iter().filter(|o| **o == MatchOutcome::False).count(),
                    n_gt,
                });
            }
            aps.push(ap);
            recalls.push(rec);
        }
        (Some(aps), recalls)
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (all_ap, all_rec) = per_split(Split::All, true);
    let (ap, ap50, ap75, ar, ar50, ar75) = match &all_ap {
        Some(a) => (mean(a), a[0], a[5], mean(&all_rec), all_rec[0], all_rec[5]),
        None => (0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    };
    let (m_ap, m_rec) = per_split(Split::Medium, false);
    let (l_ap, l_rec) = per_split(Split::Large, false);
    let result = EvalResult {
        ap,
        ap50,
        ap75,
        ap_m: m_ap.as_deref().map(mean),
        ap_l: l_ap.as_deref().map(mean),
        ar,
        ar50,
        ar75,
        ar_m: m_ap.as_ref().map(|_| mean(&m_rec)),
        ar_l: l_ap.as_ref().map(|_| mean(&l_rec)),
    };
    Ok((result, rows))
}

/// AP/AR over the ten GPS thresholds with greedy score-ordered matching.
pub fn evaluate(preds: &[ScoredInstance], gts: &[GtInstance], sim: &dyn PointSimilarity, ranges: AreaRanges) -> Result<EvalResult> {
    Ok(evaluate_detailed(preds, gts, sim, ranges)?.0)
}

/// As [`evaluate`], plus the per-threshold breakdown.
pub fn evaluate_detailed(
    preds: &[ScoredInstance],
    gts: &[GtInstance],
    sim: &dyn PointSimilarity,
    ranges: AreaRanges,
) -> Result<(EvalResult, Vec<ThresholdRow>)> {
    if let Some(first) = preds.first() {
        if preds.iter().any(|p| p.summary.height != first.summary.height || p.summary.width != first.summary.width) {
            return Err(Error::shape("prediction summaries differ in dims"));
        }
    }
    let gps = gps_matrix(preds, gts, sim)?;
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let pred_areas: Vec<f64> = preds.iter().map(|p| p.area).collect();
    let gt_areas: Vec<f64> = gts.iter().map(|g| g.area).collect();
    sweep_detailed(&gps, &scores, &pred_areas, &gt_areas, ranges)
}

pub fn write_threshold_csv(rows: &[ThresholdRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
