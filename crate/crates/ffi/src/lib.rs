//! C ABI over `ringconv`.
//!
//! Models are opaque `RcModel` handles built from config text and freed
//! with `rc_model_free`. Every fallible call returns an `RcStatus`; on
//! failure `rc_last_error` describes the cause. Models run in f32 and in
//! inference mode.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ringconv::layers::{mac_count, param_count, LayerKind, LayerSpec};
use ringconv::model::Model;
use ringconv::tensor::rot90;
use ringconv::trainer::{load_checkpoint, parse_config, save_checkpoint};
use ringconv::{Error, Tensor4};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Config = 4,
    Io = 5,
    Checkpoint = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RcLayerKind {
    Conv = 0,
    Rad = 1,
    Rsdw = 2,
    Ring = 3,
    Relu = 4,
    Batchnorm = 5,
    Maxpool = 6,
    GlobalAvgPool = 7,
    FullyConnected = 8,
}

impl From<RcLayerKind> for LayerKind {
    fn from(k: RcLayerKind) -> Self {
        match k {
            RcLayerKind::Conv => LayerKind::Conv,
            RcLayerKind::Rad => LayerKind::Rad,
            RcLayerKind::Rsdw => LayerKind::Rsdw,
            RcLayerKind::Ring => LayerKind::Ring,
            RcLayerKind::Relu => LayerKind::Relu,
            RcLayerKind::Batchnorm => LayerKind::Batchnorm,
            RcLayerKind::Maxpool => LayerKind::Maxpool,
            RcLayerKind::GlobalAvgPool => LayerKind::GlobalAvgPool,
            RcLayerKind::FullyConnected => LayerKind::FullyConnected,
        }
    }
}

/// Opaque model handle.
pub struct RcModel {
    model: Model<f32>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> RcStatus {
    match err {
        Error::Shape { .. } | Error::NonIntegralOutput { .. } => RcStatus::Shape,
        Error::Config { .. } => RcStatus::Config,
        Error::Io(_) | Error::DataSize { .. } => RcStatus::Io,
        Error::Checkpoint(_) => RcStatus::Checkpoint,
        _ => RcStatus::InvalidArgument,
    }
}

/// Runs `f`, recording any error or panic for `rc_last_error`.
fn guard(f: impl FnOnce() -> Result<(), (RcStatus, String)>) -> RcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            RcStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RcStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (RcStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (RcStatus, String) {
    (RcStatus::NullPointer, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, (RcStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (RcStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

/// Message of the last failed call on this thread, or an empty string.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn rc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a model from config text and initializes it from the config seed.
/// On success `*out` owns a handle for `rc_model_free`.
///
/// # Safety
/// `config_text` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rc_model_from_config(config_text: *const c_char, out: *mut *mut RcModel) -> RcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let cfg = parse_config(str_arg(config_text, "config_text")?).map_err(lib_err)?;
        let mut model = Model::new(&cfg.model, cfg.input_shape()).map_err(lib_err)?;
        model.init_glorot(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
        *out = Box::into_raw(Box::new(RcModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from `rc_model_from_config` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn rc_model_free(model: *mut RcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rc_model_load_checkpoint(model: *mut RcModel, path: *const c_char) -> RcStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| null("model"))?;
        load_checkpoint(&mut m.model, Path::new(str_arg(path, "path")?)).map_err(lib_err)
    })
}

/// # Safety
/// `model` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rc_model_save_checkpoint(model: *const RcModel, path: *const c_char) -> RcStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        save_checkpoint(&m.model, Path::new(str_arg(path, "path")?)).map_err(lib_err)
    })
}

/// Writes the `(channels, height, width)` the model expects to `shape[0..3]`.
///
/// # Safety
/// `model` must be a live handle; `shape` must hold 3 values.
#[no_mangle]
pub unsafe extern "C" fn rc_model_input_shape(model: *const RcModel, shape: *mut usize) -> RcStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if shape.is_null() {
            return Err(null("shape"));
        }
        let (c, h, w) = m.model.input_shape();
        std::slice::from_raw_parts_mut(shape, 3).copy_from_slice(&[c, h, w]);
        Ok(())
    })
}

/// Values produced per input item.
///
/// # Safety
/// `model` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rc_model_output_len(model: *const RcModel, out: *mut usize) -> RcStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let (c, h, w) = m.model.output_shape().map_err(lib_err)?;
        *out = c * h * w;
        Ok(())
    })
}

/// Sum of the per-layer weight counts, biases excluded.
///
/// # Safety
/// `model` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rc_model_param_count(model: *const RcModel, out: *mut usize) -> RcStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = m.model.specs().iter().map(param_count).sum::<Result<usize, _>>().map_err(lib_err)?;
        Ok(())
    })
}

/// Inference on `batch` NCHW items of the input shape. `output` receives
/// `batch * rc_model_output_len` values; `output_len` is its capacity.
///
/// # Safety
/// `input` must hold `batch * c * h * w` floats and `output` `output_len`.
#[no_mangle]
pub unsafe extern "C" fn rc_model_forward(model: *const RcModel, input: *const f32, batch: usize, output: *mut f32, output_len: usize) -> RcStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if input.is_null() {
            return Err(null("input"));
        }
        if output.is_null() {
            return Err(null("output"));
        }
        if batch == 0 {
            return Err((RcStatus::InvalidArgument, "batch must be at least 1".into()));
        }
        let (c, h, w) = m.model.input_shape();
        let x = std::slice::from_raw_parts(input, batch * c * h * w).to_vec();
        let y = m.model.forward_eval(&Tensor4::from_vec([batch, c, h, w], x).map_err(lib_err)?).map_err(lib_err)?;
        if y.data().len() > output_len {
            return Err((RcStatus::Shape, format!("output needs {} values, capacity is {output_len}", y.data().len())));
        }
        std::slice::from_raw_parts_mut(output, y.data().len()).copy_from_slice(y.data());
        Ok(())
    })
}

fn layer_spec(kind: RcLayerKind, k: usize, in_channels: usize, out_channels: usize, out1: usize) -> LayerSpec {
    match LayerKind::from(kind) {
        LayerKind::Conv => LayerSpec::conv(k, in_channels, out_channels),
        LayerKind::Rad => LayerSpec::rad(k, in_channels, out_channels),
        LayerKind::Rsdw => LayerSpec::rsdw(k, in_channels, out1, out_channels),
        LayerKind::Ring => LayerSpec::ring(k, in_channels, out_channels),
        LayerKind::Relu => LayerSpec::relu(),
        LayerKind::Batchnorm => LayerSpec::batchnorm(in_channels),
        LayerKind::Maxpool => LayerSpec::maxpool(),
        LayerKind::GlobalAvgPool => LayerSpec::global_avg_pool(),
        LayerKind::FullyConnected => LayerSpec::fully_connected(in_channels, out_channels),
    }
}

/// Weight count of one layer, bias excluded. `out1` is only read for RSDW.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rc_layer_param_count(kind: RcLayerKind, k: usize, in_channels: usize, out_channels: usize, out1: usize, out: *mut usize) -> RcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = param_count(&layer_spec(kind, k, in_channels, out_channels, out1)).map_err(lib_err)?;
        Ok(())
    })
}

/// Multiply-accumulates of one layer for an `h × w` output surface.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn rc_layer_mac_count(
    kind: RcLayerKind,
    k: usize,
    in_channels: usize,
    out_channels: usize,
    out1: usize,
    h: usize,
    w: usize,
    out: *mut u64,
) -> RcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = mac_count(&layer_spec(kind, k, in_channels, out_channels, out1), h, w).map_err(lib_err)?;
        Ok(())
    })
}

/// Rotates every `h × w` plane of an NCHW tensor by `quarter_turns`
/// counter-clockwise quarter turns. `dst` receives `n * c * h * w` values
/// in a `w × h` layout for odd turns.
///
/// # Safety
/// `src` and `dst` must each hold `n * c * h * w` floats and not overlap.
#[no_mangle]
pub unsafe extern "C" fn rc_rot90(src: *const f32, n: usize, c: usize, h: usize, w: usize, quarter_turns: i32, dst: *mut f32) -> RcStatus {
    guard(|| {
        if src.is_null() {
            return Err(null("src"));
        }
        if dst.is_null() {
            return Err(null("dst"));
        }
        let len = n * c * h * w;
        let t = Tensor4::from_vec([n, c, h, w], std::slice::from_raw_parts(src, len).to_vec()).map_err(lib_err)?;
        std::slice::from_raw_parts_mut(dst, len).copy_from_slice(rot90(&t, quarter_turns).data());
        Ok(())
    })
}
