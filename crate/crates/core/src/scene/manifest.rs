use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{FormatError, Result};
use crate::instance::GridLoc;
use crate::iuv::AnnotatedPoint;
use crate::tensor::{read_tensor, write_tensor, BinaryMask, FeaturePyramid};

use super::{Ellipse, Scene, SceneInstance};

pub const SCENE_FORMAT: &str = "ddp-scene";
pub const SCENE_VERSION: u32 = 1;
const MANIFEST_NAME: &str = "scene.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneManifest {
    format: String,
    version: u32,
    seed: u64,
    base_h: usize,
    base_w: usize,
    sparsity: f64,
    pyramid: Vec<String>,
    instances: Vec<InstanceRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceRecord {
    id: usize,
    ellipse: Ellipse,
    location: GridLoc,
    mask: String,
    dp_mask: String,
    points: Vec<AnnotatedPoint>,
}

fn manifest_err(field: impl Into<String>, reason: impl Into<String>) -> FormatError {
    FormatError::Manifest { field: field.into(), reason: reason.into() }
}

/// Blob paths must stay inside the scene directory.
fn resolve(dir: &Path, rel: &str, field: &str) -> Result<PathBuf> {
    let p = Path::new(rel);
    if rel.is_empty() || p.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(manifest_err(field, format!("path `{rel}` must be relative and inside the scene directory")).into());
    }
    Ok(dir.join(p))
}

/// Writes `scene.json` plus one DDPT blob per pyramid level and mask into `dir`.
pub fn write_scene(scene: &Scene, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    scene.validate()?;
    fs::create_dir_all(dir)?;
    let mut pyramid = Vec::new();
    for (k, level) in scene.pyramid.levels().iter().enumerate() {
        let name = format!("pyramid_{k}.ddpt");
        write_tensor(level, dir.join(&name))?;
        pyramid.push(name);
    }
    let mut instances = Vec::new();
    for inst in &scene.instances {
        let mask = format!("mask_{}.ddpt", inst.id);
        let dp_mask = format!("dp_mask_{}.ddpt", inst.id);
        write_tensor(&inst.mask.to_tensor::<f32>(), dir.join(&mask))?;
        write_tensor(&inst.dp_mask.to_tensor::<f32>(), dir.join(&dp_mask))?;
        instances.push(InstanceRecord {
            id: inst.id,
            ellipse: inst.ellipse,
            location: inst.location,
            mask,
            dp_mask,
            points: inst.points.clone(),
        });
    }
    let m = SceneManifest {
        format: SCENE_FORMAT.into(),
        version: SCENE_VERSION,
        seed: scene.seed,
        base_h: scene.base_h,
        base_w: scene.base_w,
        sparsity: scene.sparsity(),
        pyramid,
        instances,
    };
    let path = dir.join(MANIFEST_NAME);
    fs::write(&path, serde_json::to_vec_pretty(&m)?)?;
    Ok(path)
}

/// Reads a scene written by [`write_scene`]; `path` is the directory or its `scene.json`.
pub fn read_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let (dir, file) = if path.is_dir() { (path.to_path_buf(), path.join(MANIFEST_NAME)) } else {
        (path.parent().map(Path::to_path_buf).unwrap_or_default(), path.to_path_buf())
    };
    let m: SceneManifest = serde_json::from_slice(&fs::read(&file)?)?;
    if m.format != SCENE_FORMAT {
        return Err(manifest_err("format", format!("expected `{SCENE_FORMAT}`, found `{}`", m.format)).into());
    }
    if m.version != SCENE_VERSION {
        return Err(manifest_err("version", format!("unsupported version {}", m.version)).into());
    }
    if m.pyramid.is_empty() {
        return Err(manifest_err("pyramid", "no levels").into());
    }
    let levels = m
        .pyramid
        .iter()
        .enumerate()
        .map(|(k, rel)| read_tensor::<f32>(resolve(&dir, rel, &format!("pyramid[{k}]"))?))
        .collect::<Result<Vec<_>>>()?;
    let pyramid = FeaturePyramid::new(m.base_h, m.base_w, levels)?;
    let mut instances = Vec::with_capacity(m.instances.len());
    for (k, rec) in m.instances.into_iter().enumerate() {
        let load = |rel: &str, field: &str| -> Result<BinaryMask> {
            let t = read_tensor::<f32>(resolve(&dir, rel, &format!("instances[{k}].{field}"))?)?;
            if t.height() != m.base_h || t.width() != m.base_w {
                return Err(manifest_err(format!("instances[{k}].{field}"), "mask dims differ from base resolution").into());
            }
            BinaryMask::from_tensor(&t)
        };
        let mask = load(&rec.mask, "mask")?;
        let dp_mask = load(&rec.dp_mask, "dp_mask")?;
        if rec.points.iter().any(|p| p.instance_id != rec.id) {
            return Err(manifest_err(format!("instances[{k}].points"), "point instance_id differs from record id").into());
        }
        instances.push(SceneInstance { id: rec.id, ellipse: rec.ellipse, location: rec.location, mask, dp_mask, points: rec.points });
    }
    let scene = Scene { seed: m.seed, base_h: m.base_h, base_w: m.base_w, pyramid, instances };
    scene.validate()?;
    Ok(scene)
}
