//! C ABI for the cubeformer library: opaque model handles, error codes,
//! checkpoint loading, whole-image inference, and model inspection.
//!
//! The generated header lands in `include/cubeformer.h` at build time.
//! All functions return a `CfStatus`; `cf_last_error_message` retrieves
//! a human-readable description of the most recent failure on the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use cubeformer::data::{ColorSpace, ImageBuffer};
use cubeformer::infer::super_resolve;
use cubeformer::model::{flops_estimate, Model, ModelConfig, Variant};
use cubeformer::train::Checkpoint;

/// Status codes returned by every API call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CfStatus {
    CfOk = 0,
    CfNullArgument = 1,
    CfInvalidUtf8 = 2,
    CfIoError = 3,
    CfConfigError = 4,
    CfShapeError = 5,
    CfRuntimeError = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let cstring = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = cstring);
}

fn status_of(err: &cubeformer::Error) -> CfStatus {
    use cubeformer::Error;
    match err {
        Error::Io { .. } | Error::Image { .. } | Error::Checkpoint { .. } => CfStatus::CfIoError,
        Error::Config(_) => CfStatus::CfConfigError,
        Error::Shape(_) | Error::Size(_) => CfStatus::CfShapeError,
        Error::Usage(_) | Error::NonFiniteLoss { .. } => CfStatus::CfRuntimeError,
    }
}

fn fail(err: cubeformer::Error) -> CfStatus {
    set_error(&err.to_string());
    status_of(&err)
}

/// Opaque handle to a loaded model.
pub struct CfModel {
    inner: Model<f32>,
}

/// Last error message for this thread. The pointer stays valid until the
/// next failing call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn cf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn cf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Load a model from a checkpoint file written by the trainer or CLI.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must point to
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_model_load(path: *const c_char, out: *mut *mut CfModel) -> CfStatus {
    if path.is_null() || out.is_null() {
        set_error("null argument");
        return CfStatus::CfNullArgument;
    }
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        set_error("path is not valid UTF-8");
        return CfStatus::CfInvalidUtf8;
    };
    let ck = match Checkpoint::load(Path::new(path)) {
        Ok(ck) => ck,
        Err(e) => return fail(e),
    };
    match ck.restore_model() {
        Ok(model) => {
            *out = Box::into_raw(Box::new(CfModel { inner: model }));
            CfStatus::CfOk
        }
        Err(e) => fail(e),
    }
}

/// Build a freshly initialized model (mainly for binding tests).
/// `variant` is 0 for full, 1 for lite.
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_model_new(
    variant: u32,
    scale: u32,
    groups: u32,
    channels: u32,
    heads: u32,
    seed: u64,
    out: *mut *mut CfModel,
) -> CfStatus {
    if out.is_null() {
        set_error("null argument");
        return CfStatus::CfNullArgument;
    }
    let config = ModelConfig {
        variant: if variant == 0 { Variant::Full } else { Variant::Lite },
        n_groups: groups as usize,
        channels: channels as usize,
        heads: heads as usize,
        scale: scale as usize,
        ..ModelConfig::default()
    };
    match Model::new(&config, seed) {
        Ok(model) => {
            *out = Box::into_raw(Box::new(CfModel { inner: model }));
            CfStatus::CfOk
        }
        Err(e) => fail(e),
    }
}

/// Release a model handle. Null is a no-op.
///
/// # Safety
/// `model` must have come from `cf_model_load`/`cf_model_new` and not
/// have been freed already.
#[no_mangle]
pub unsafe extern "C" fn cf_model_free(model: *mut CfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Upscale factor of the model.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cf_model_scale(model: *const CfModel) -> u32 {
    if model.is_null() {
        return 0;
    }
    (*model).inner.config.scale as u32
}

/// Total trainable parameter count.
///
/// # Safety
/// `model` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cf_model_param_count(model: *mut CfModel, out: *mut u64) -> CfStatus {
    if model.is_null() || out.is_null() {
        set_error("null argument");
        return CfStatus::CfNullArgument;
    }
    *out = (*model).inner.param_count() as u64;
    CfStatus::CfOk
}

/// Analytic forward FLOPs at the given input resolution.
///
/// # Safety
/// `model` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cf_model_flops_estimate(
    model: *const CfModel,
    height: u32,
    width: u32,
    out: *mut u64,
) -> CfStatus {
    if model.is_null() || out.is_null() {
        set_error("null argument");
        return CfStatus::CfNullArgument;
    }
    *out = flops_estimate(&(*model).inner.config, height as usize, width as usize);
    CfStatus::CfOk
}

/// Super-resolve a planar RGB f32 image in [0, 1]. `input` holds
/// `3 * height * width` values channel-major; `output` must hold
/// `3 * (scale*height) * (scale*width)` values and is written in the
/// same layout. Any input size is accepted (reflect padding is applied
/// internally).
///
/// # Safety
/// `input` and `output` must be valid for the stated element counts.
#[no_mangle]
pub unsafe extern "C" fn cf_model_infer(
    model: *const CfModel,
    input: *const f32,
    height: u32,
    width: u32,
    output: *mut f32,
) -> CfStatus {
    if model.is_null() || input.is_null() || output.is_null() {
        set_error("null argument");
        return CfStatus::CfNullArgument;
    }
    let (h, w) = (height as usize, width as usize);
    if h == 0 || w == 0 {
        set_error("empty input image");
        return CfStatus::CfShapeError;
    }
    let data = std::slice::from_raw_parts(input, 3 * h * w).to_vec();
    let img = match ImageBuffer::from_planar(h, w, ColorSpace::Rgb, data) {
        Ok(img) => img,
        Err(e) => return fail(e),
    };
    let model = &(*model).inner;
    match super_resolve(model, &img) {
        Ok(result) => {
            let out_len = 3 * result.height * result.width;
            ptr::copy_nonoverlapping(result.data().as_ptr(), output, out_len);
            CfStatus::CfOk
        }
        Err(e) => fail(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifecycle_and_inference() {
        let mut handle: *mut CfModel = ptr::null_mut();
        let status = unsafe { cf_model_new(0, 2, 1, 16, 2, 5, &mut handle) };
        assert_eq!(status, CfStatus::CfOk);
        assert!(!handle.is_null());
        assert_eq!(unsafe { cf_model_scale(handle) }, 2);

        let mut params = 0u64;
        assert_eq!(unsafe { cf_model_param_count(handle, &mut params) }, CfStatus::CfOk);
        assert!(params > 0);

        let mut flops = 0u64;
        assert_eq!(
            unsafe { cf_model_flops_estimate(handle, 32, 32, &mut flops) },
            CfStatus::CfOk
        );
        assert!(flops > 0);

        let (h, w) = (24usize, 17usize); // non-multiple size exercises padding
        let input: Vec<f32> = (0..3 * h * w).map(|i| (i % 97) as f32 / 97.0).collect();
        let mut output = vec![0.0f32; 3 * 2 * h * 2 * w];
        let status = unsafe {
            cf_model_infer(handle, input.as_ptr(), h as u32, w as u32, output.as_mut_ptr())
        };
        assert_eq!(status, CfStatus::CfOk);
        assert!(output.iter().all(|v| v.is_finite()));
        // determinism across calls
        let mut output2 = vec![0.0f32; output.len()];
        unsafe {
            cf_model_infer(handle, input.as_ptr(), h as u32, w as u32, output2.as_mut_ptr())
        };
        assert_eq!(output, output2);

        unsafe { cf_model_free(handle) };
    }

    #[test]
    fn null_arguments_are_rejected() {
        let status = unsafe { cf_model_load(ptr::null(), ptr::null_mut()) };
        assert_eq!(status, CfStatus::CfNullArgument);
        let msg = unsafe { CStr::from_ptr(cf_last_error_message()) };
        assert!(!msg.to_bytes().is_empty());
    }

    #[test]
    fn missing_checkpoint_reports_io_error() {
        let path = CString::new("/definitely/not/here.ckpt").unwrap();
        let mut handle: *mut CfModel = ptr::null_mut();
        let status = unsafe { cf_model_load(path.as_ptr(), &mut handle) };
        assert_eq!(status, CfStatus::CfIoError);
        assert!(handle.is_null());
    }

    #[test]
    fn version_is_non_empty() {
        let v = unsafe { CStr::from_ptr(cf_version()) };
        assert!(!v.to_bytes().is_empty());
    }
}
