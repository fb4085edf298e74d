//! Synthetic scenes: elliptical "person" instances with procedural IUV,
//! annotated points, a seeded feature pyramid, and the on-disk manifest.

mod generate;
mod manifest;

pub use generate::{generate_scene, SceneConfig, PART_RINGS, PART_SECTORS, POINTS_PER_INSTANCE};
pub use manifest::{read_scene, write_scene, SCENE_FORMAT, SCENE_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{GridLoc, InstanceTargets, PositiveTarget};
use crate::iuv::{AnnotatedPoint, IuvField, IuvSummary, IUV_CHANNELS, U_OFFSET, V_OFFSET};
use crate::real::Real;
use crate::tensor::{bilinear_resize, binarize, pyramid_level_dims, BinaryMask, DenseTensor, FeaturePyramid};

/// Axis-aligned ellipse in base pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cy: f64,
    pub cx: f64,
    pub ry: f64,
    pub rx: f64,
}

impl Ellipse {
    /// Normalized radius and angle of a point; radius ≤ 1 inside.
    pub fn polar(&self, y: f64, x: f64) -> (f64, f64) {
        let dy = (y - self.cy) / self.ry;
        let dx = (x - self.cx) / self.rx;
        ((dy * dy + dx * dx).sqrt(), dy.atan2(dx))
    }
}

/// Procedural `(part, u, v)` of a point with normalized polar coords.
///
/// Parts are angular sectors split into radial rings; `u` runs across the
/// ring and `v` across the sector.
pub fn procedural_iuv(rho: f64, theta: f64) -> (u8, f64, f64) {
    let t = (theta + std::f64::consts::PI) / (2.0 * std::f64::consts::PI); // [0, 1]
    let sector_f = (t * PART_SECTORS as f64).min(PART_SECTORS as f64 - 1e-9);
    let sector = sector_f.floor() as usize;
    let ring_f = (rho.clamp(0.0, 1.0) * PART_RINGS as f64).min(PART_RINGS as f64 - 1e-9);
    let ring = ring_f.floor() as usize;
    let part = 1 + ring * PART_SECTORS + sector;
    (part as u8, ring_f - ring as f64, sector_f - sector as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneInstance {
    pub id: usize,
    pub ellipse: Ellipse,
    /// Generator location on the 1/8 grid.
    pub location: GridLoc,
    /// Visible pixels at base resolution.
    pub mask: BinaryMask,
    /// Pixels carrying dense-pose annotation; a subset of `mask`.
    pub dp_mask: BinaryMask,
    pub points: Vec<AnnotatedPoint>,
}

impl SceneInstance {
    pub fn area(&self) -> usize {
        self.mask.count_ones()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub seed: u64,
    pub base_h: usize,
    pub base_w: usize,
    pub pyramid: FeaturePyramid<f32>,
    pub instances: Vec<SceneInstance>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.instances.is_empty() {
            return Err(Error::NoInstances);
        }
        if self.pyramid.base_dims() != (self.base_h, self.base_w) {
            return Err(Error::shape("pyramid base resolution differs from scene"));
        }
        let grid = self.grid_dims();
        for inst in &self.instances {
            if inst.mask.height() != self.base_h || inst.mask.width() != self.base_w || !inst.dp_mask.same_dims(&inst.mask) {
                return Err(Error::shape(format!("instance {} mask dims", inst.id)));
            }
            if inst.points.is_empty() {
                return Err(Error::invalid(format!("instance {} has no annotated points", inst.id)));
            }
            if inst.location.h >= grid.0 || inst.location.w >= grid.1 {
                return Err(Error::invalid(format!("instance {} location outside 1/8 grid", inst.id)));
            }
            for p in &inst.points {
                p.checked_pixel(self.base_h, self.base_w)?;
            }
        }
        let s = self.sparsity();
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::invalid(format!("sparsity {s} outside (0, 1]")));
        }
        Ok(())
    }

    /// Union of instance masks at base resolution.
    pub fn foreground(&self) -> BinaryMask {
        let mut fg = BinaryMask::new(self.base_h, self.base_w);
        for inst in &self.instances {
            fg = fg.union(&inst.mask).expect("validated dims");
        }
        fg
    }

    /// Foreground fraction of the frame.
    pub fn sparsity(&self) -> f64 {
        self.foreground().count_ones() as f64 / (self.base_h * self.base_w) as f64
    }

    /// 1/4-scale dims (the IUV branch resolution).
    pub fn iuv_dims(&self) -> (usize, usize) {
        pyramid_level_dims(self.base_h, self.base_w, 0)
    }

    /// 1/8-scale dims (the instance grid).
    pub fn grid_dims(&self) -> (usize, usize) {
        pyramid_level_dims(self.base_h, self.base_w, 1)
    }

    /// Resizes a base-resolution mask: bilinear, then `> 0.5`.
    pub fn resize_mask(mask: &BinaryMask, h: usize, w: usize) -> Result<BinaryMask> {
        binarize(&bilinear_resize(&mask.to_tensor::<f32>(), h, w)?, 0.5)
    }

    pub fn instance_masks_at(&self, h: usize, w: usize) -> Result<Vec<BinaryMask>> {
        self.instances.iter().map(|i| Self::resize_mask(&i.mask, h, w)).collect()
    }

    /// Annotated points of every instance mapped to 1/4 scale.
    pub fn points_at_iuv_scale(&self) -> Vec<AnnotatedPoint> {
        let (h, w) = self.iuv_dims();
        let fy = h as f32 / self.base_h as f32;
        let fx = w as f32 / self.base_w as f32;
        self.instances
            .iter()
            .flat_map(|i| i.points.iter().map(move |p| AnnotatedPoint { x: p.x * fx, y: p.y * fy, ..*p }))
            .collect()
    }

    /// Index of the instance owning each base pixel.
    pub fn owner_map(&self) -> Vec<Option<usize>> {
        let mut owner = vec![None; self.base_h * self.base_w];
        for (k, inst) in self.instances.iter().enumerate() {
            for (i, &b) in inst.mask.data().iter().enumerate() {
                if b && owner[i].is_none() {
                    owner[i] = Some(k);
                }
            }
        }
        owner
    }

    /// Ground-truth summary at `h × w`, sampling the procedural field at pixel centres.
    pub fn gt_summary(&self, h: usize, w: usize) -> Result<IuvSummary> {
        let masks = self.instance_masks_at(h, w)?;
        let sy = self.base_h as f64 / h as f64;
        let sx = self.base_w as f64 / w as f64;
        let mut s = IuvSummary { height: h, width: w, part: vec![0; h * w], u: vec![0.0; h * w], v: vec![0.0; h * w] };
        for r in 0..h {
            for c in 0..w {
                let Some(k) = masks.iter().position(|m| m.get(r, c)) else { continue };
                let (rho, theta) = self.instances[k].ellipse.polar((r as f64 + 0.5) * sy, (c as f64 + 0.5) * sx);
                let (part, u, v) = procedural_iuv(rho, theta);
                let i = r * w + c;
                s.part[i] = part;
                s.u[i] = u as f32 as f64;
                s.v[i] = v as f32 as f64;
            }
        }
        Ok(s)
    }

    /// Logit field whose summary is `gt_summary(h, w)`: a margin on the true
    /// class and the true U/V in that class's channels.
    pub fn gt_logits<T: Real>(&self, h: usize, w: usize, margin: f64) -> Result<IuvField<T>> {
        let s = self.gt_summary(h, w)?;
        let mut t = DenseTensor::<T>::zeros(IUV_CHANNELS, h, w);
        for r in 0..h {
            for c in 0..w {
                let (part, u, v) = s.at(r, c);
                let p = part as usize;
                t.set(p, r, c, T::lit(margin));
                if p > 0 {
                    t.set(U_OFFSET + p, r, c, T::lit(u));
                    t.set(V_OFFSET + p, r, c, T::lit(v));
                }
            }
        }
        IuvField::new(t)
    }

    /// Mask-loss targets on the 1/8 grid, one positive per instance location.
    pub fn instance_targets(&self) -> Result<InstanceTargets> {
        let (gh, gw) = self.grid_dims();
        let positives = self
            .instances
            .iter()
            .map(|inst| {
                Ok(PositiveTarget {
                    location: inst.location,
                    m_ins: Self::resize_mask(&inst.mask, gh, gw)?,
                    m_dp: Self::resize_mask(&inst.dp_mask, gh, gw)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        InstanceTargets::new(gh, gw, positives)
    }
}
