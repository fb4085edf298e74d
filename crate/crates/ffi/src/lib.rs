//! C ABI over `ddp-core`.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns a
//! [`DdpStatus`]; on failure the message is kept per thread and can be copied
//! out with [`ddp_last_error`]. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::os::raw::c_int;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ddp_core::pipeline::{run_direct, DirectWeights, PipelineConfig, WeightConfig};
use ddp_core::scene::{generate_scene, read_scene, write_scene, Scene, SceneConfig};
use ddp_core::temporal::{psnr, ssim};
use ddp_core::tensor::{bilinear_resize, read_tensor, write_tensor};
use ddp_core::{DenseTensor, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Format = 4,
    Io = 5,
    Domain = 6,
    Numeric = 7,
    Panic = 8,
    Other = 9,
}

impl From<&Error> for DdpStatus {
    fn from(e: &Error) -> Self {
        match e.kind() {
            "invalid_argument" => Self::InvalidArgument,
            "shape" | "empty_tensor" => Self::Shape,
            "format" => Self::Format,
            "io" => Self::Io,
            "domain" => Self::Domain,
            "numeric" => Self::Numeric,
            _ => Self::Other,
        }
    }
}

/// Opaque `f32` tensor of shape channels × height × width.
pub struct DdpTensor(DenseTensor<f32>);

/// Opaque synthetic scene.
pub struct DdpScene(Scene);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: DdpStatus, msg: impl Into<String>) -> DdpStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), DdpStatus>) -> DdpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DdpStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(DdpStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn core<T>(r: ddp_core::Result<T>) -> Result<T, DdpStatus> {
    r.map_err(|e| fail(DdpStatus::from(&e), e.to_string()))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, DdpStatus> {
    if p.is_null() {
        return Err(fail(DdpStatus::NullPointer, "null path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(DdpStatus::InvalidArgument, "path is not valid UTF-8"))
}

unsafe fn out_arg<'a, T>(p: *mut *mut T) -> Result<&'a mut *mut T, DdpStatus> {
    p.as_mut().ok_or_else(|| fail(DdpStatus::NullPointer, "null output pointer"))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, DdpStatus> {
    p.as_ref().ok_or_else(|| fail(DdpStatus::NullPointer, format!("null {what}")))
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `len` bytes, into `buf`. Returns the full message length
/// excluding the terminator, so a second call can size the buffer.
#[no_mangle]
pub unsafe extern "C" fn ddp_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Zero-filled tensor.
#[no_mangle]
pub unsafe extern "C" fn ddp_tensor_zeros(channels: usize, height: usize, width: usize, out: *mut *mut DdpTensor) -> DdpStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = Box::into_raw(Box::new(DdpTensor(DenseTensor::zeros(channels, height, width))));
        Ok(())
    })
}

/// Tensor copied from `channels * height * width` row-major floats.
#[no_mangle]
pub unsafe extern "C" fn ddp_tensor_from_data(
    data: *const f32,
    channels: usize,
    height: usize,
    width: usize,
    out: *mut *mut DdpTensor,
) -> DdpStatus {
    guard(|| {
        let out = out_arg(out)?;
        let n = channels
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| fail(DdpStatus::InvalidArgument, "dims overflow"))?;
        let values = if n == 0 {
            Vec::new()
        } else if data.is_null() {
            return Err(fail(DdpStatus::NullPointer, "null data"));
        } else {
            std::slice::from_raw_parts(data, n).to_vec()
        };
        let t = core(DenseTensor::from_vec(channels, height, width, values))?;
        *out = Box::into_raw(Box::new(DdpTensor(t)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ddp_tensor_free(t: *mut DdpTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ddp_tensor_dims(t: *const DdpTensor, channels: *mut usize, height: *mut usize, width: *mut usize) -> DdpStatus {
    guard(|| {
        let t = handle(t, "tensor")?;
        let (c, h, w) = t.0.dims();
        for (p, v) in [(channels, c), (height, h), (width, w)] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Borrowed pointer to the row-major data; valid until the handle is freed.
/// Null for a null handle or an empty tensor.
#[no_mangle]
pub unsafe extern "C" fn ddp_tensor_data(t: *const DdpTensor) -> *const f32 {
    match t.as_ref() {
        Some(t) if !t.0.is_empty() => t.0.data().as_ptr(),
        _ => ptr::null(),
    }
}

/// Reads an `f32` DDPT blob of rank 3.
#[no_mangle]
pub unsafe extern "C" fn ddp_tensor_read(path: *const c_char, out: *mut *mut DdpTensor) -> DdpStatus {
    guard(|| {
        let out = out_arg(out)?;
        let t = core(read_tensor::<f32>(path_arg(path)?))?;
        *out = Box::into_raw(Box::new(DdpTensor(t)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ddp_tensor_write(t: *const DdpTensor, path: *const c_char) -> DdpStatus {
    guard(|| {
        let t = handle(t, "tensor")?;
        core(write_tensor(&t.0, path_arg(path)?))
    })
}

/// Align-corners-false bilinear resize to `height × width`.
#[no_mangle]
pub unsafe extern "C" fn ddp_tensor_resize(t: *const DdpTensor, height: usize, width: usize, out: *mut *mut DdpTensor) -> DdpStatus {
    guard(|| {
        let t = handle(t, "tensor")?;
        let out = out_arg(out)?;
        let r = core(bilinear_resize(&t.0, height, width))?;
        *out = Box::into_raw(Box::new(DdpTensor(r)));
        Ok(())
    })
}

/// PSNR in dB, capped for identical inputs.
#[no_mangle]
pub unsafe extern "C" fn ddp_psnr(a: *const DdpTensor, b: *const DdpTensor, peak: f64, out: *mut f64) -> DdpStatus {
    guard(|| {
        let (a, b) = (handle(a, "tensor")?, handle(b, "tensor")?);
        let out = out.as_mut().ok_or_else(|| fail(DdpStatus::NullPointer, "null output pointer"))?;
        *out = core(psnr(&a.0, &b.0, peak))?;
        Ok(())
    })
}

/// Mean SSIM over channels and valid 11×11 windows.
#[no_mangle]
pub unsafe extern "C" fn ddp_ssim(a: *const DdpTensor, b: *const DdpTensor, peak: f64, out: *mut f64) -> DdpStatus {
    guard(|| {
        let (a, b) = (handle(a, "tensor")?, handle(b, "tensor")?);
        let out = out.as_mut().ok_or_else(|| fail(DdpStatus::NullPointer, "null output pointer"))?;
        *out = core(ssim(&a.0, &b.0, peak))?;
        Ok(())
    })
}

/// Seeded synthetic scene with `base × base` pixels and default channels.
#[no_mangle]
pub unsafe extern "C" fn ddp_scene_generate(seed: u64, n_instances: usize, sparsity: f64, base: usize, out: *mut *mut DdpScene) -> DdpStatus {
    guard(|| {
        let out = out_arg(out)?;
        let cfg = SceneConfig { n_instances, sparsity, base_h: base, base_w: base, ..Default::default() };
        let s = core(generate_scene(seed, &cfg))?;
        *out = Box::into_raw(Box::new(DdpScene(s)));
        Ok(())
    })
}

/// Reads a scene from its directory or its `scene.json`.
#[no_mangle]
pub unsafe extern "C" fn ddp_scene_read(path: *const c_char, out: *mut *mut DdpScene) -> DdpStatus {
    guard(|| {
        let out = out_arg(out)?;
        let s = core(read_scene(path_arg(path)?))?;
        *out = Box::into_raw(Box::new(DdpScene(s)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ddp_scene_write(s: *const DdpScene, dir: *const c_char) -> DdpStatus {
    guard(|| {
        let s = handle(s, "scene")?;
        core(write_scene(&s.0, path_arg(dir)?)).map(drop)
    })
}

#[no_mangle]
pub unsafe extern "C" fn ddp_scene_free(s: *mut DdpScene) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Instance count, or -1 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ddp_scene_num_instances(s: *const DdpScene) -> c_int {
    s.as_ref().map_or(-1, |s| s.0.instances.len() as c_int)
}

/// Foreground fraction, or NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ddp_scene_sparsity(s: *const DdpScene) -> f64 {
    s.as_ref().map_or(f64::NAN, |s| s.0.sparsity())
}

/// Runs the direct pipeline with seeded random weights and default settings,
/// returning the 75-channel IUV logits at 1/4 scale.
#[no_mangle]
pub unsafe extern "C" fn ddp_scene_run_direct(s: *const DdpScene, weight_seed: u64, iuv_out: *mut *mut DdpTensor) -> DdpStatus {
    guard(|| {
        let s = handle(s, "scene")?;
        let out = out_arg(iuv_out)?;
        let w = core(DirectWeights::<f32>::for_scene(&s.0, &WeightConfig::default(), weight_seed))?;
        let r = core(run_direct(&s.0, &w, &PipelineConfig::default()))?;
        *out = Box::into_raw(Box::new(DdpTensor(r.iuv.logits().clone())));
        Ok(())
    })
}

/// Library version, static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ddp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
