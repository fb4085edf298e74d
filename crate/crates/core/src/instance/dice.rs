use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{BinaryMask, DenseTensor};

use super::{GridLoc, InstancePrediction};

#[derive(Debug, Clone, PartialEq)]
pub struct DiceLoss<T = f32> {
    pub loss: T,
    /// dL/dpred, same shape as the prediction.
    pub grad: DenseTensor<T>,
}

/// `1 − 2·Σpg / (Σp² + Σg²)` with its analytic gradient.
pub fn dice_loss<T: Real>(pred: &DenseTensor<T>, gt: &BinaryMask) -> Result<DiceLoss<T>> {
    if pred.channels() != 1 || pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::shape(format!(
            "prediction {:?} vs mask {}x{}",
            pred.dims(),
            gt.height(),
            gt.width()
        )));
    }
    let mut inter = T::zero();
    let mut p2 = T::zero();
    let mut g2 = T::zero();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        let g = if g { T::one() } else { T::zero() };
        inter += p * g;
        p2 += p * p;
        g2 += g;
    }
    let denom = p2 + g2;
    if denom == T::zero() {
        return Err(Error::DegenerateDice);
    }
    let two = T::lit(2.0);
    let loss = T::one() - two * inter / denom;
    // d/dp_j = −2 (g_j·D − 2 p_j·I) / D²
    let d2 = denom * denom;
    let grad = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| {
            let g = if g { T::one() } else { T::zero() };
            -two * (g * denom - two * p * inter) / d2
        })
        .collect();
    Ok(DiceLoss { loss, grad: DenseTensor::from_parts_unchecked(1, pred.height(), pred.width(), grad) })
}

/// Ground truth for one positive location of the instance grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveTarget {
    pub location: GridLoc,
    pub m_ins: BinaryMask,
    pub m_dp: BinaryMask,
}

/// Per-location class labels and masks for every positive location.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceTargets {
    height: usize,
    width: usize,
    labels: Vec<u8>,
    positives: Vec<PositiveTarget>,
}

impl InstanceTargets {
    /// Positive locations get label 1 (person), everything else 0.
    pub fn new(height: usize, width: usize, mut positives: Vec<PositiveTarget>) -> Result<Self> {
        let mut labels = vec![0u8; height * width];
        for p in &positives {
            if p.location.h >= height || p.location.w >= width {
                return Err(Error::invalid(format!("positive location {:?} outside grid", p.location)));
            }
            let i = p.location.h * width + p.location.w;
            if labels[i] != 0 {
                return Err(Error::invalid(format!("duplicate positive location {:?}", p.location)));
            }
            labels[i] = 1;
        }
        positives.sort_by_key(|p| p.location);
        Ok(Self { height, width, labels, positives })
    }

    pub fn label(&self, loc: GridLoc) -> u8 {
        self.labels[loc.h * self.width + loc.w]
    }

    pub fn n_pos(&self) -> usize {
        self.labels.iter().filter(|&&c| c > 0).count()
    }

    pub fn positives(&self) -> &[PositiveTarget] {
        &self.positives
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// `(L_Mins, L_Mdp)`: dice averaged over positive locations.
pub fn mask_losses<T: Real>(preds: &[InstancePrediction<T>], targets: &InstanceTargets) -> Result<(T, T)> {
    let n_pos = targets.n_pos();
    if n_pos == 0 {
        return Err(Error::NoPositives);
    }
    let mut l_ins = T::zero();
    let mut l_dp = T::zero();
    for t in targets.positives() {
        let pred = preds
            .iter()
            .find(|p| p.location == t.location)
            .ok_or_else(|| Error::invalid(format!("no prediction at positive location {:?}", t.location)))?;
        l_ins += dice_loss(&pred.m_ins(), &t.m_ins)?.loss;
        l_dp += dice_loss(&pred.m_dp(), &t.m_dp)?.loss;
    }
    let n = T::lit(n_pos as f64);
    Ok((l_ins / n, l_dp / n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[u8], w: usize) -> BinaryMask {
        BinaryMask::from_bools(bits.len() / w, w, bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn perfect_and_disjoint() {
        let g = mask(&[1, 0, 1, 1, 0, 0], 3);
        let p = g.to_tensor::<f64>();
        assert_eq!(dice_loss(&p, &g).unwrap().loss, 0.0);
        let inv = p.map(|v| 1.0 - v);
        assert_eq!(dice_loss(&inv, &g).unwrap().loss, 1.0);
    }

    #[test]
    fn half_prediction_closed_form() {
        // k = 3 ones of n = 8
        let g = mask(&[1, 1, 1, 0, 0, 0, 0, 0], 4);
        let p = DenseTensor::<f64>::filled(1, 2, 4, 0.5);
        let (k, n) = (3.0, 8.0);
        let want = 1.0 - 2.0 * (0.5 * k) / (0.25 * n + k);
        assert!((dice_loss(&p, &g).unwrap().loss - want).abs() < 1e-15);
    }

    #[test]
    fn degenerate_when_both_zero() {
        let g = BinaryMask::new(2, 2);
        let p = DenseTensor::<f32>::zeros(1, 2, 2);
        assert_eq!(dice_loss(&p, &g).unwrap_err().to_string(), "degenerate dice");
    }

    #[test]
    fn no_positives_is_error() {
        let t = InstanceTargets::new(2, 2, vec![]).unwrap();
        assert!(matches!(mask_losses::<f32>(&[], &t), Err(Error::NoPositives)));
    }

    fn pred_from(loc: GridLoc, ins: &BinaryMask, dp: &BinaryMask) -> InstancePrediction<f64> {
        // logits of ±40 saturate the sigmoid to exactly 0 or 1 in f64
        let to_logit = |m: &BinaryMask| m.to_tensor::<f64>().map(|v| if v > 0.5 { 40.0 } else { -800.0 });
        InstancePrediction { location: loc, m_ins_logits: to_logit(ins), m_dp_logits: to_logit(dp), score: 1.0 }
    }

    #[test]
    fn averages_over_positives() {
        let a = mask(&[1, 1, 0, 0], 2);
        let b = mask(&[0, 0, 1, 1], 2);
        let t = InstanceTargets::new(
            2,
            2,
            vec![
                PositiveTarget { location: GridLoc::new(0, 0), m_ins: a.clone(), m_dp: a.clone() },
                PositiveTarget { location: GridLoc::new(1, 1), m_ins: b.clone(), m_dp: b.clone() },
            ],
        )
        .unwrap();
        let perfect = [pred_from(GridLoc::new(0, 0), &a, &a), pred_from(GridLoc::new(1, 1), &b, &b)];
        let (li, ld) = mask_losses(&perfect, &t).unwrap();
        assert!(li.abs() < 1e-12 && ld.abs() < 1e-12);
        let half = [pred_from(GridLoc::new(0, 0), &a, &a), pred_from(GridLoc::new(1, 1), &a, &a)];
        let (li, ld) = mask_losses(&half, &t).unwrap();
        assert!((li - 0.5).abs() < 1e-12 && (ld - 0.5).abs() < 1e-12);
    }
}
