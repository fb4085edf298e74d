use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::DenseTensor;

use super::GridLoc;

pub const HEAD_HIDDEN: usize = 8;
pub const HEAD_OUT: usize = 2;

/// Flattened weights of a 3-layer 1×1 conv head `C_in → 8 → 8 → 2`.
///
/// Layout per layer: weights `[out][in]` then bias `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams<T = f32> {
    c_in: usize,
    theta: Vec<T>,
}

impl<T: Real> HeadParams<T> {
    pub fn param_count(c_in: usize) -> usize {
        (c_in * HEAD_HIDDEN + HEAD_HIDDEN) + (HEAD_HIDDEN * HEAD_HIDDEN + HEAD_HIDDEN) + (HEAD_HIDDEN * HEAD_OUT + HEAD_OUT)
    }

    pub fn new(c_in: usize, theta: Vec<T>) -> Result<Self> {
        let want = Self::param_count(c_in);
        if theta.len() != want {
            return Err(Error::shape(format!("head params length {} != {want} for {c_in} input channels", theta.len())));
        }
        Ok(Self { c_in, theta })
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn as_slice(&self) -> &[T] {
        &self.theta
    }

    fn layers(&self) -> [(usize, usize, &[T], &[T]); 3] {
        let dims = [(self.c_in, HEAD_HIDDEN), (HEAD_HIDDEN, HEAD_HIDDEN), (HEAD_HIDDEN, HEAD_OUT)];
        let mut off = 0;
        dims.map(|(i, o)| {
            let w = &self.theta[off..off + i * o];
            let b = &self.theta[off + i * o..off + i * o + o];
            off += i * o + o;
            (i, o, w, b)
        })
    }
}

/// Linear map from controller features to head parameters: `θ = A·f + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGenerator<T = f32> {
    /// Row-major `params × features`.
    pub matrix: Vec<T>,
    pub bias: Vec<T>,
    pub features: usize,
}

impl<T: Real> WeightGenerator<T> {
    pub fn params(&self) -> usize {
        self.bias.len()
    }

    pub fn zeros(features: usize, params: usize) -> Self {
        Self { matrix: vec![T::zero(); params * features], bias: vec![T::zero(); params], features }
    }

    pub fn random(features: usize, params: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let bound = scale / (features as f64).sqrt();
        Self {
            matrix: (0..params * features).map(|_| T::lit(rng.gen_range(-bound..bound))).collect(),
            bias: (0..params).map(|_| T::lit(rng.gen_range(-0.1..0.1))).collect(),
            features,
        }
    }

    pub fn apply(&self, f: &[T]) -> Result<Vec<T>> {
        if f.len() != self.features || self.matrix.len() != self.features * self.params() {
            return Err(Error::shape(format!("generator expects {} features, got {}", self.features, f.len())));
        }
        Ok(self
            .matrix
            .chunks_exact(self.features)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(f).fold(b, |acc, (&a, &x)| acc + a * x))
            .collect())
    }
}

/// Head parameters for the instance at `location`, read from the controller features there.
pub fn generate_head_params<T: Real>(
    controller_features: &DenseTensor<T>,
    location: GridLoc,
    generator: &WeightGenerator<T>,
    head_in_channels: usize,
) -> Result<HeadParams<T>> {
    if location.h >= controller_features.height() || location.w >= controller_features.width() {
        return Err(Error::invalid(format!("location ({}, {}) outside controller map", location.h, location.w)));
    }
    if generator.params() != HeadParams::<T>::param_count(head_in_channels) {
        return Err(Error::shape(format!(
            "generator emits {} params, head needs {}",
            generator.params(),
            HeadParams::<T>::param_count(head_in_channels)
        )));
    }
    let f = controller_features.pixel(location.h, location.w);
    HeadParams::new(head_in_channels, generator.apply(&f)?)
}

/// Instance and dense-pose mask logits of one instance on the 1/8 grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InstancePrediction<T = f32> {
    pub location: GridLoc,
    pub m_ins_logits: DenseTensor<T>,
    pub m_dp_logits: DenseTensor<T>,
    pub score: T,
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> InstancePrediction<T> {
    pub fn m_ins(&self) -> DenseTensor<T> {
        self.m_ins_logits.map(sigmoid)
    }

    pub fn m_dp(&self) -> DenseTensor<T> {
        self.m_dp_logits.map(sigmoid)
    }
}

/// Runs the dynamic head on `X̃_D` (features plus relative coordinates).
pub fn mask_head_apply<T: Real>(
    x_tilde: &DenseTensor<T>,
    theta: &HeadParams<T>,
    location: GridLoc,
    score: T,
) -> Result<InstancePrediction<T>> {
    if x_tilde.channels() != theta.c_in() {
        return Err(Error::ChannelMismatch { expected: theta.c_in(), got: x_tilde.channels() });
    }
    let (h, w) = (x_tilde.height(), x_tilde.width());
    let n = h * w;
    let mut act: Vec<T> = x_tilde.data().to_vec();
    for (li, (c_in, c_out, wt, b)) in theta.layers().into_iter().enumerate() {
        let mut next = vec![T::zero(); c_out * n];
        for co in 0..c_out {
            let dst = &mut next[co * n..(co + 1) * n];
            dst.fill(b[co]);
            for ci in 0..c_in {
                let wv = wt[co * c_in + ci];
                for (d, &x) in dst.iter_mut().zip(&act[ci * n..(ci + 1) * n]) {
                    *d += wv * x;
                }
            }
            if li < 2 {
                dst.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
        }
        act = next;
    }
    let m_dp = act.split_off(n);
    Ok(InstancePrediction {
        location,
        m_ins_logits: DenseTensor::from_parts_unchecked(1, h, w, act),
        m_dp_logits: DenseTensor::from_parts_unchecked(1, h, w, m_dp),
        score,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn param_count_for_typical_input() {
        // (10*8+8) + (64+8) + (16+2)
        assert_eq!(HeadParams::<f32>::param_count(10), 178);
    }

    #[test]
    fn zero_generator_gives_zero_theta() {
        let f = DenseTensor::<f32>::filled(3, 2, 2, 1.7);
        let g = WeightGenerator::zeros(3, HeadParams::<f32>::param_count(4));
        let th = generate_head_params(&f, GridLoc::new(1, 1), &g, 4).unwrap();
        assert!(th.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_generator_copies_features() {
        let p = HeadParams::<f64>::param_count(2);
        let mut g = WeightGenerator::<f64>::zeros(p, p);
        for i in 0..p {
            g.matrix[i * p + i] = 1.0;
        }
        let f = DenseTensor::<f64>::from_fn(p, 2, 3, |c, h, w| (c * 6 + h * 3 + w) as f64 * 0.01);
        let th = generate_head_params(&f, GridLoc::new(1, 2), &g, 2).unwrap();
        assert_eq!(th.as_slice(), f.pixel(1, 2).as_slice());
    }

    #[test]
    fn distinct_features_give_distinct_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let p = HeadParams::<f64>::param_count(2);
        let g = WeightGenerator::<f64>::random(4, p, 1.0, &mut rng);
        let f = DenseTensor::<f64>::from_fn(4, 3, 3, |_, _, _| rng.gen_range(-1.0..1.0));
        let a = generate_head_params(&f, GridLoc::new(0, 0), &g, 2).unwrap();
        let b = generate_head_params(&f, GridLoc::new(2, 1), &g, 2).unwrap();
        let fa = f.pixel(0, 0);
        let fb = f.pixel(2, 1);
        assert_eq!(a.as_slice(), g.apply(&fa).unwrap().as_slice());
        assert_eq!(b.as_slice(), g.apply(&fb).unwrap().as_slice());
        assert_ne!(a, b);
    }

    #[test]
    fn generator_is_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let g = WeightGenerator::<f64>::random(5, 30, 1.0, &mut rng);
        let f1: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f2: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sum: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a + b).collect();
        let (t1, t2, ts) = (g.apply(&f1).unwrap(), g.apply(&f2).unwrap(), g.apply(&sum).unwrap());
        for i in 0..30 {
            assert!((ts[i] - (t1[i] + t2[i] - g.bias[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn length_mismatch_is_error() {
        let f = DenseTensor::<f32>::zeros(3, 2, 2);
        let g = WeightGenerator::zeros(3, 17);
        assert!(generate_head_params(&f, GridLoc::new(0, 0), &g, 4).is_err());
        assert!(HeadParams::<f32>::new(4, vec![0.0; 3]).is_err());
    }

    #[test]
    fn zero_theta_gives_half_masks() {
        let x = DenseTensor::<f32>::filled(4, 3, 3, 2.0);
        let th = HeadParams::new(4, vec![0.0; HeadParams::<f32>::param_count(4)]).unwrap();
        let p = mask_head_apply(&x, &th, GridLoc::new(0, 0), 1.0).unwrap();
        assert!(p.m_ins_logits.data().iter().chain(p.m_dp_logits.data()).all(|&v| v == 0.0));
        assert!(p.m_ins().data().iter().chain(p.m_dp().data()).all(|&v| v == 0.5));
    }

    #[test]
    fn per_pixel_mlp_oracle_and_permutation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let c = 4;
        let x = DenseTensor::<f64>::from_fn(c, 2, 2, |_, _, _| rng.gen_range(-1.0..1.0));
        let theta: Vec<f64> = (0..HeadParams::<f64>::param_count(c)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let th = HeadParams::new(c, theta.clone()).unwrap();
        let p = mask_head_apply(&x, &th, GridLoc::new(0, 0), 0.5).unwrap();
        let mlp = |v: &[f64]| -> [f64; 2] {
            let mut off = 0;
            let mut a = v.to_vec();
            for (li, (i, o)) in [(c, 8), (8, 8), (8, 2)].into_iter().enumerate() {
                let w = &theta[off..off + i * o];
                let b = &theta[off + i * o..off + i * o + o];
                off += i * o + o;
                a = (0..o)
                    .map(|r| {
                        let z = b[r] + (0..i).map(|k| w[r * i + k] * a[k]).sum::<f64>();
                        if li < 2 { z.max(0.0) } else { z }
                    })
                    .collect();
            }
            [a[0], a[1]]
        };
        for h in 0..2 {
            for w in 0..2 {
                let [ins, dp] = mlp(&x.pixel(h, w));
                assert!((p.m_ins_logits.get(0, h, w) - ins).abs() < 1e-12);
                assert!((p.m_dp_logits.get(0, h, w) - dp).abs() < 1e-12);
            }
        }
        // swap two pixels of the input; outputs swap the same way
        let perm = |t: &DenseTensor<f64>| DenseTensor::from_fn(t.channels(), 2, 2, |ch, h, w| {
            let (sh, sw) = match (h, w) { (0, 0) => (1, 1), (1, 1) => (0, 0), o => o };
            t.get(ch, sh, sw)
        });
        let q = mask_head_apply(&perm(&x), &th, GridLoc::new(0, 0), 0.5).unwrap();
        assert_eq!(q.m_ins_logits, perm(&p.m_ins_logits));
        assert_eq!(q.m_dp_logits, perm(&p.m_dp_logits));
    }

    #[test]
    fn theta_channel_mismatch_is_error() {
        let x = DenseTensor::<f32>::zeros(3, 2, 2);
        let th = HeadParams::new(4, vec![0.0; HeadParams::<f32>::param_count(4)]).unwrap();
        assert!(mask_head_apply(&x, &th, GridLoc::new(0, 0), 1.0).is_err());
    }
}
