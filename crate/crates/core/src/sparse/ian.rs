//! Instance-aware normalization.
//!
//! Mean and biased variance are computed per (instance, channel) over the
//! instance's own sites; γ and β are shared by all instances.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{BinaryMask, DenseTensor};

use super::SparseTensor;

const UNASSIGNED: u32 = u32::MAX;

/// What a normalization group stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    /// Index into the mask list the assignment was built from.
    Instance(usize),
    /// Active sites outside every instance mask (all-ones foreground only).
    Background,
    /// Every active site at once ("w/o IAN").
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    #[default]
    InstanceAware,
    /// One normalization over all active sites jointly.
    Joint,
}

/// Normalization group of every active site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceAssignment {
    groups: Vec<u32>,
    kinds: Vec<GroupKind>,
}

impl InstanceAssignment {
    /// Explicit per-site groups; `None` marks an unassigned site.
    pub fn from_groups(groups: Vec<Option<usize>>, n_groups: usize) -> Result<Self> {
        let mut raw = Vec::with_capacity(groups.len());
        for g in groups {
            match g {
                Some(g) if g >= n_groups => {
                    return Err(Error::invalid(format!("group {g} out of range 0..{n_groups}")))
                }
                Some(g) => raw.push(g as u32),
                None => raw.push(UNASSIGNED),
            }
        }
        Ok(Self { groups: raw, kinds: (0..n_groups).map(GroupKind::Instance).collect() })
    }

    /// Assigns every site to one instance mask covering it.
    ///
    /// Where masks overlap, the instance with the largest mask probability
    /// wins, ties going to the lowest index; without probabilities the lowest
    /// index wins. Instances left with no sites get no group. Sites outside
    /// every mask join a trailing background group when `background_group`
    /// is set, and stay unassigned otherwise.
    pub fn from_masks<T: Real>(
        s: &SparseTensor<T>,
        masks: &[BinaryMask],
        probs: Option<&[DenseTensor<T>]>,
        background_group: bool,
    ) -> Result<Self> {
        for m in masks {
            if m.height() != s.height() || m.width() != s.width() {
                return Err(Error::shape("instance mask dims differ from sparse tensor"));
            }
        }
        if let Some(p) = probs {
            if p.len() != masks.len() {
                return Err(Error::invalid("one probability map per mask required"));
            }
            if p.iter().any(|t| t.channels() != 1 || t.height() != s.height() || t.width() != s.width()) {
                return Err(Error::shape("probability map dims differ from sparse tensor"));
            }
        }
        let mut owner = Vec::with_capacity(s.len());
        for site in s.sites() {
            let (h, w) = (site.h as usize, site.w as usize);
            let mut best: Option<(usize, T)> = None;
            for (i, m) in masks.iter().enumerate() {
                if !m.get(h, w) {
                    continue;
                }
                let p = probs.map_or(T::zero(), |p| p[i].get(0, h, w));
                if best.map_or(true, |(_, bp)| p > bp) {
                    best = Some((i, p));
                }
            }
            owner.push(best.map(|(i, _)| i));
        }
        let mut group_of = vec![UNASSIGNED; masks.len()];
        let mut kinds = Vec::new();
        for i in 0..masks.len() {
            if owner.contains(&Some(i)) {
                group_of[i] = kinds.len() as u32;
                kinds.push(GroupKind::Instance(i));
            }
        }
        let background = if background_group && owner.iter().any(Option::is_none) {
            kinds.push(GroupKind::Background);
            kinds.len() as u32 - 1
        } else {
            UNASSIGNED
        };
        let groups = owner.into_iter().map(|o| o.map_or(background, |i| group_of[i])).collect();
        Ok(Self { groups, kinds })
    }

    /// Every site in a single group.
    pub fn joint(n_sites: usize) -> Self {
        Self { groups: vec![0; n_sites], kinds: vec![GroupKind::Joint] }
    }

    pub fn for_mode(&self, mode: NormMode) -> Self {
        match mode {
            NormMode::InstanceAware => self.clone(),
            NormMode::Joint => Self::joint(self.groups.len()),
        }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn n_groups(&self) -> usize {
        self.kinds.len()
    }

    pub fn kinds(&self) -> &[GroupKind] {
        &self.kinds
    }

    pub fn group(&self, site: usize) -> Option<usize> {
        let g = self.groups[site];
        (g != UNASSIGNED).then_some(g as usize)
    }

    /// Site count per group, failing on unassigned sites and empty groups.
    fn checked_counts<T: Real>(&self, s: &SparseTensor<T>) -> Result<Vec<usize>> {
        if self.groups.len() != s.len() {
            return Err(Error::invalid(format!("assignment covers {} sites, tensor has {}", self.groups.len(), s.len())));
        }
        let mut counts = vec![0usize; self.kinds.len()];
        for (i, &g) in self.groups.iter().enumerate() {
            if g == UNASSIGNED {
                let site = s.sites()[i];
                return Err(Error::UnassignedSite { h: site.h, w: site.w });
            }
            counts[g as usize] += 1;
        }
        if let Some(g) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyInstance(g));
        }
        Ok(counts)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IanParams<T = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub epsilon: T,
}

impl<T: Real> IanParams<T> {
    pub const DEFAULT_EPSILON: f64 = 1e-5;

    /// γ = 1, β = 0, ε = 1e-5.
    pub fn identity(channels: usize) -> Self {
        Self { gamma: vec![T::one(); channels], beta: vec![T::zero(); channels], epsilon: T::lit(Self::DEFAULT_EPSILON) }
    }

    fn validate(&self, channels: usize) -> Result<()> {
        if self.gamma.len() != channels || self.beta.len() != channels {
            return Err(Error::ChannelMismatch { expected: channels, got: self.gamma.len().min(self.beta.len()) });
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        Ok(())
    }
}

/// Per-group per-channel mean and inverse standard deviation.
struct GroupStats<T> {
    mean: Vec<T>,
    inv_std: Vec<T>,
}

fn group_stats<T: Real>(s: &SparseTensor<T>, a: &InstanceAssignment, counts: &[usize], eps: T) -> GroupStats<T> {
    let c = s.channels();
    let g_n = counts.len();
    let mut sum = vec![T::zero(); g_n * c];
    for i in 0..s.len() {
        let g = a.groups[i] as usize;
        for (acc, &v) in sum[g * c..(g + 1) * c].iter_mut().zip(s.site_values(i)) {
            *acc += v;
        }
    }
    let mean: Vec<T> = sum.iter().enumerate().map(|(k, &v)| v / T::lit(counts[k / c] as f64)).collect();
    let mut sq = vec![T::zero(); g_n * c];
    for i in 0..s.len() {
        let g = a.groups[i] as usize;
        for (ch, &v) in s.site_values(i).iter().enumerate() {
            let d = v - mean[g * c + ch];
            sq[g * c + ch] += d * d;
        }
    }
    let inv_std = sq.iter().enumerate().map(|(k, &v)| (v / T::lit(counts[k / c] as f64) + eps).sqrt().recip()).collect();
    GroupStats { mean, inv_std }
}

pub fn ian_forward<T: Real>(s: &SparseTensor<T>, assign: &InstanceAssignment, p: &IanParams<T>) -> Result<SparseTensor<T>> {
    p.validate(s.channels())?;
    let counts = assign.checked_counts(s)?;
    let stats = group_stats(s, assign, &counts, p.epsilon);
    let c = s.channels();
    let mut out = Vec::with_capacity(s.values().len());
    for i in 0..s.len() {
        let g = assign.groups[i] as usize;
        for (ch, &v) in s.site_values(i).iter().enumerate() {
            let k = g * c + ch;
            out.push((v - stats.mean[k]) * stats.inv_std[k] * p.gamma[ch] + p.beta[ch]);
        }
    }
    Ok(s.with_values(c, out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IanGrads<T = f32> {
    pub input: SparseTensor<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

/// Backward pass including the dependence of μ and σ² on every input.
pub fn ian_backward<T: Real>(
    s: &SparseTensor<T>,
    assign: &InstanceAssignment,
    p: &IanParams<T>,
    upstream: &SparseTensor<T>,
) -> Result<IanGrads<T>> {
    p.validate(s.channels())?;
    if !upstream.same_sites(s) || upstream.channels() != s.channels() {
        return Err(Error::invalid("upstream must match the forward output sites and channels"));
    }
    let counts = assign.checked_counts(s)?;
    let stats = group_stats(s, assign, &counts, p.epsilon);
    let c = s.channels();
    let g_n = counts.len();
    let mut grad_gamma = vec![T::zero(); c];
    let mut grad_beta = vec![T::zero(); c];
    // Σ dx̂ and Σ dx̂·x̂ per group and channel, with dx̂ = upstream · γ
    let mut sum_dxhat = vec![T::zero(); g_n * c];
    let mut sum_dxhat_xhat = vec![T::zero(); g_n * c];
    for i in 0..s.len() {
        let g = assign.groups[i] as usize;
        let up = upstream.site_values(i);
        for (ch, &v) in s.site_values(i).iter().enumerate() {
            let k = g * c + ch;
            let xhat = (v - stats.mean[k]) * stats.inv_std[k];
            grad_gamma[ch] += up[ch] * xhat;
            grad_beta[ch] += up[ch];
            let dxhat = up[ch] * p.gamma[ch];
            sum_dxhat[k] += dxhat;
            sum_dxhat_xhat[k] += dxhat * xhat;
        }
    }
    let mut gx = Vec::with_capacity(s.values().len());
    for i in 0..s.len() {
        let g = assign.groups[i] as usize;
        let n = T::lit(counts[g] as f64);
        let up = upstream.site_values(i);
        for (ch, &v) in s.site_values(i).iter().enumerate() {
            let k = g * c + ch;
            let xhat = (v - stats.mean[k]) * stats.inv_std[k];
            let dxhat = up[ch] * p.gamma[ch];
            gx.push(stats.inv_std[k] / n * (n * dxhat - sum_dxhat[k] - xhat * sum_dxhat_xhat[k]));
        }
    }
    Ok(IanGrads { input: s.with_values(c, gx), gamma: grad_gamma, beta: grad_beta })
}
