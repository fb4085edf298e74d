//! Submanifold sparse 3×3 convolution.

use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;

use super::SparseTensor;

/// Kernel offsets `(dh, dw)` in row-major order; index 4 is the centre.
pub const KERNEL_OFFSETS: [(i32, i32); 9] =
    [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0), (1, 1)];

const NONE: u32 = u32::MAX;

/// For every site, the index of the active neighbour at each kernel offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborIndex {
    neighbors: Vec<[u32; 9]>,
}

impl NeighborIndex {
    pub fn build<T: Real>(s: &SparseTensor<T>) -> Self {
        let (h, w) = (s.height(), s.width());
        let mut grid = vec![NONE; h * w];
        for (i, site) in s.sites().iter().enumerate() {
            grid[site.h as usize * w + site.w as usize] = i as u32;
        }
        let neighbors = s
            .sites()
            .iter()
            .map(|site| {
                let mut nb = [NONE; 9];
                for (k, &(dh, dw)) in KERNEL_OFFSETS.iter().enumerate() {
                    let (nh, nw) = (site.h as i64 + dh as i64, site.w as i64 + dw as i64);
                    if nh >= 0 && nw >= 0 && (nh as usize) < h && (nw as usize) < w {
                        nb[k] = grid[nh as usize * w + nw as usize];
                    }
                }
                nb
            })
            .collect();
        Self { neighbors }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Active neighbour of site `i` at offset `k`.
    #[inline]
    pub fn get(&self, i: usize, k: usize) -> Option<usize> {
        let n = self.neighbors[i][k];
        (n != NONE).then_some(n as usize)
    }

    /// Number of (site, offset) pairs with an active neighbour.
    pub fn active_pairs(&self) -> usize {
        self.neighbors.iter().map(|nb| nb.iter().filter(|&&n| n != NONE).count()).sum()
    }
}

/// 3×3 stride-1 weights laid out `[offset][c_in][c_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SscWeights<T = f32> {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> SscWeights<T> {
    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        Self { c_in, c_out, kernel: vec![T::zero(); 9 * c_in * c_out], bias: vec![T::zero(); c_out] }
    }

    /// Centre tap is the identity, all other taps zero.
    pub fn delta(channels: usize) -> Self {
        let mut w = Self::zeros(channels, channels);
        for c in 0..channels {
            let i = w.index(4, c, c);
            w.kernel[i] = T::one();
        }
        w
    }

    pub fn random(c_in: usize, c_out: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let bound = scale / ((9 * c_in) as f64).sqrt();
        Self {
            c_in,
            c_out,
            kernel: (0..9 * c_in * c_out).map(|_| T::lit(rng.gen_range(-bound..bound))).collect(),
            bias: (0..c_out).map(|_| T::lit(rng.gen_range(-0.1..0.1))).collect(),
        }
    }

    #[inline]
    pub fn index(&self, k: usize, ci: usize, co: usize) -> usize {
        (k * self.c_in + ci) * self.c_out + co
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel.len() != 9 * self.c_in * self.c_out || self.bias.len() != self.c_out {
            return Err(Error::shape("ssc kernel/bias length"));
        }
        if self.kernel.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ssc weights"));
        }
        Ok(())
    }
}

pub fn ssc_forward<T: Real>(s: &SparseTensor<T>, w: &SscWeights<T>) -> Result<SparseTensor<T>> {
    ssc_forward_indexed(s, w, &NeighborIndex::build(s))
}

/// `y[p] = bias + Σ_δ W_δ · x[p + δ]` over offsets whose neighbour is active.
pub fn ssc_forward_indexed<T: Real>(s: &SparseTensor<T>, w: &SscWeights<T>, index: &NeighborIndex) -> Result<SparseTensor<T>> {
    w.validate()?;
    if s.channels() != w.c_in {
        return Err(Error::ChannelMismatch { expected: w.c_in, got: s.channels() });
    }
    if index.len() != s.len() {
        return Err(Error::invalid("neighbor index built for another site set"));
    }
    let (ci_n, co_n) = (w.c_in, w.c_out);
    let mut out = vec![T::zero(); s.len() * co_n];
    for (i, y) in out.chunks_exact_mut(co_n).enumerate() {
        y.copy_from_slice(&w.bias);
        for k in 0..9 {
            let Some(n) = index.get(i, k) else { continue };
            let x = s.site_values(n);
            let wk = &w.kernel[k * ci_n * co_n..(k + 1) * ci_n * co_n];
            for (ci, &xv) in x.iter().enumerate() {
                let row = &wk[ci * co_n..(ci + 1) * co_n];
                for (yo, &wv) in y.iter_mut().zip(row) {
                    *yo += wv * xv;
                }
            }
        }
    }
    Ok(s.with_values(co_n, out))
}

/// Gradients of [`ssc_forward`] with respect to its input and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SscGrads<T = f32> {
    pub input: SparseTensor<T>,
    pub weights: SscWeights<T>,
}

pub fn ssc_backward<T: Real>(s: &SparseTensor<T>, w: &SscWeights<T>, upstream: &SparseTensor<T>) -> Result<SscGrads<T>> {
    ssc_backward_indexed(s, w, upstream, &NeighborIndex::build(s))
}

pub(crate) fn ssc_backward_indexed<T: Real>(
    s: &SparseTensor<T>,
    w: &SscWeights<T>,
    upstream: &SparseTensor<T>,
    index: &NeighborIndex,
) -> Result<SscGrads<T>> {
    w.validate()?;
    if !upstream.same_sites(s) {
        return Err(Error::invalid("upstream site set differs from forward output"));
    }
    if s.channels() != w.c_in {
        return Err(Error::ChannelMismatch { expected: w.c_in, got: s.channels() });
    }
    if upstream.channels() != w.c_out {
        return Err(Error::ChannelMismatch { expected: w.c_out, got: upstream.channels() });
    }
    let (ci_n, co_n) = (w.c_in, w.c_out);
    let mut gx = vec![T::zero(); s.len() * ci_n];
    let mut gw = SscWeights::zeros(ci_n, co_n);
    for i in 0..s.len() {
        let g = upstream.site_values(i);
        for (b, &gv) in gw.bias.iter_mut().zip(g) {
            *b += gv;
        }
        for k in 0..9 {
            let Some(n) = index.get(i, k) else { continue };
            let x = s.site_values(n);
            let base = k * ci_n * co_n;
            for ci in 0..ci_n {
                let row = base + ci * co_n;
                let mut acc = T::zero();
                for co in 0..co_n {
                    acc += w.kernel[row + co] * g[co];
                    gw.kernel[row + co] += x[ci] * g[co];
                }
                gx[n * ci_n + ci] += acc;
            }
        }
    }
    Ok(SscGrads { input: s.with_values(ci_n, gx), weights: gw })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::sparse::{to_sparse, Site};
    use crate::tensor::{BinaryMask, DenseTensor};

    fn random_sparse(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, density: f64) -> SparseTensor<f64> {
        let x = DenseTensor::from_fn(c, h, w, |_, _, _| rng.gen_range(-1.0..1.0));
        let m = BinaryMask::from_fn(h, w, |_, _| rng.gen_bool(density));
        to_sparse(&x, &m).unwrap()
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_sparse(&mut rng, 6, 7, 3, 0.5);
        let y = ssc_forward(&s, &SscWeights::delta(3)).unwrap();
        assert_eq!(y, s);
    }

    #[test]
    fn isolated_site_sees_only_centre_tap() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = SparseTensor::new(5, 5, 2, vec![Site::new(2, 2)], vec![0.5, -1.5]).unwrap();
        let w = SscWeights::<f64>::random(2, 3, 1.0, &mut rng);
        let y = ssc_forward(&s, &w).unwrap();
        for co in 0..3 {
            let want = w.bias[co] + w.kernel[w.index(4, 0, co)] * 0.5 + w.kernel[w.index(4, 1, co)] * -1.5;
            assert!((y.values()[co] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn output_sites_equal_input_sites() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let s = random_sparse(&mut rng, 9, 9, 2, 0.3);
        let w = SscWeights::<f64>::random(2, 4, 1.0, &mut rng);
        let y = ssc_forward(&s, &w).unwrap();
        assert!(y.same_sites(&s));
        assert_eq!(y.channels(), 4);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let s = random_sparse(&mut rng, 5, 5, 2, 0.6);
        let w = SscWeights::<f64>::random(2, 2, 1.0, &mut rng);
        let g = ssc_backward(&s, &w, &s.zeros_like()).unwrap();
        assert!(g.input.values().iter().all(|&v| v == 0.0));
        assert!(g.weights.kernel.iter().chain(&g.weights.bias).all(|&v| v == 0.0));
    }

    #[test]
    fn delta_kernel_passes_gradient_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let s = random_sparse(&mut rng, 5, 5, 2, 0.6);
        let up = random_sparse(&mut rng, 5, 5, 2, 1.0);
        let up = s.with_values(2, up.values()[..s.len() * 2].to_vec());
        let g = ssc_backward(&s, &SscWeights::delta(2), &up).unwrap();
        assert_eq!(g.input, up);
    }

    #[test]
    fn mismatched_upstream_sites_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let s = random_sparse(&mut rng, 5, 5, 2, 0.6);
        let other = SparseTensor::new(5, 5, 2, vec![], vec![]).unwrap();
        assert!(ssc_backward(&s, &SscWeights::delta(2), &other).is_err());
    }

    #[test]
    fn channel_mismatch() {
        let s = SparseTensor::<f32>::new(2, 2, 3, vec![Site::new(0, 0)], vec![0.0; 3]).unwrap();
        assert!(matches!(ssc_forward(&s, &SscWeights::delta(2)), Err(Error::ChannelMismatch { .. })));
    }
}
