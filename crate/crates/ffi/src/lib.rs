//! C ABI over the attack engine.
//!
//! Models and attack configurations are opaque heap handles created by
//! `vt_*_new` / `vt_model_load` and released with the matching `vt_*_free`.
//! Fallible calls return a [`VtStatus`]; on failure the message is kept per
//! thread and read with [`vt_last_error_message`].
//!
//! Images cross the boundary as flat `double` arrays in `C,H,W` order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vtbench::attacks::{make_config, run_attack, AttackConfig, Method};
use vtbench::diffnet::{load_model, Model};
use vtbench::providers::model_provider;
use vtbench::tensor::{Rng, Tensor};
use vtbench::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Validation = 4,
    Budget = 5,
    Io = 6,
    Panic = 7,
}

/// Opaque trained model.
pub struct VtModel(Model);

/// Opaque attack configuration.
pub struct VtAttackConfig(AttackConfig);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> VtStatus {
    match e {
        Error::InvalidArgument(_) => VtStatus::InvalidArgument,
        Error::Parse(_) => VtStatus::Parse,
        Error::Validation(_) => VtStatus::Validation,
        Error::Budget(_) => VtStatus::Budget,
        Error::Io(_) => VtStatus::Io,
    }
}

struct Fail(VtStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(VtStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f` behind a panic barrier and records any failure.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VtStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VtStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            VtStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(VtStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn input_tensor(m: &Model, x: *const f64, len: usize) -> Result<Tensor, Fail> {
    let data = slice_arg(x, len, "x")?;
    let shape = m.input_shape();
    let want: usize = shape.iter().product();
    if len != want {
        return Err(Fail(
            VtStatus::InvalidArgument,
            format!("x has {len} values, model expects {want}"),
        ));
    }
    Ok(Tensor::new(shape.to_vec(), data.to_vec())?)
}

unsafe fn write_handle<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next `vt_*` call on the same thread.
#[no_mangle]
pub extern "C" fn vt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn vt_model_load(path: *const c_char, out: *mut *mut VtModel) -> VtStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        write_handle(out, VtModel(load_model(Path::new(path))?))
    })
}

/// Parses a model from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn vt_model_from_json(
    json: *const c_char,
    out: *mut *mut VtModel,
) -> VtStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        write_handle(out, VtModel(Model::from_json(text)?))
    })
}

/// # Safety
/// `model` must be null or a handle from `vt_model_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vt_model_free(model: *mut VtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of output classes, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vt_model_num_classes(model: *const VtModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.num_classes())
}

/// Number of input values `C*H*W`, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vt_model_input_len(model: *const VtModel) -> usize {
    model
        .as_ref()
        .map_or(0, |m| m.0.input_shape().iter().product())
}

/// Writes the logits of `x` into `out` (`out_len` must equal the class count).
///
/// # Safety
/// `x` must point to `len` doubles and `out` to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vt_model_logits(
    model: *const VtModel,
    x: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> VtStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        if out_len != m.num_classes() {
            return Err(Fail(
                VtStatus::InvalidArgument,
                format!(
                    "out has {out_len} slots, model has {} classes",
                    m.num_classes()
                ),
            ));
        }
        let logits = m.forward_logits(&input_tensor(m, x, len)?)?;
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(logits.data());
        Ok(())
    })
}

/// Predicted class of `x`, ties going to the lowest index.
///
/// # Safety
/// `x` must point to `len` doubles and `out_class` be writable.
#[no_mangle]
pub unsafe extern "C" fn vt_model_predict(
    model: *const VtModel,
    x: *const f64,
    len: usize,
    out_class: *mut usize,
) -> VtStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        if out_class.is_null() {
            return Err(null("out_class"));
        }
        *out_class = m.predict(&input_tensor(m, x, len)?)?;
        Ok(())
    })
}

/// Preset configuration for `method` (`"fgsm"`, `"ifgsm"`, `"mifgsm"`,
/// `"nifgsm"`, `"vmifgsm"`, `"vnifgsm"`) with budget `epsilon_255` over
/// `steps` iterations.
///
/// # Safety
/// `method` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn vt_config_new(
    method: *const c_char,
    epsilon_255: f64,
    steps: usize,
    out: *mut *mut VtAttackConfig,
) -> VtStatus {
    guard(|| {
        let method: Method = str_arg(method, "method")?.parse()?;
        let cfg = make_config(method, epsilon_255, steps);
        cfg.validate()?;
        write_handle(out, VtAttackConfig(cfg))
    })
}

/// # Safety
/// `config` must be null or a handle from `vt_config_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vt_config_free(config: *mut VtAttackConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

unsafe fn update(config: *mut VtAttackConfig, f: impl FnOnce(&mut AttackConfig)) -> VtStatus {
    guard(|| {
        let c = &mut config.as_mut().ok_or_else(|| null("config"))?.0;
        let mut next = *c;
        f(&mut next);
        next.validate()?;
        *c = next;
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vt_config_set_beta(config: *mut VtAttackConfig, beta: f64) -> VtStatus {
    update(config, |c| c.beta = beta)
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vt_config_set_samples(
    config: *mut VtAttackConfig,
    samples: usize,
) -> VtStatus {
    update(config, |c| c.samples = samples)
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vt_config_set_decay(config: *mut VtAttackConfig, decay: f64) -> VtStatus {
    update(config, |c| c.decay = decay)
}

/// Step size in 0-255 units.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vt_config_set_step_size(
    config: *mut VtAttackConfig,
    step_size_255: f64,
) -> VtStatus {
    update(config, |c| c.step_size_255 = step_size_255)
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vt_config_set_project_ball(
    config: *mut VtAttackConfig,
    on: bool,
) -> VtStatus {
    update(config, |c| c.project_ball = on)
}

/// Crafts an adversarial example for `(x, label)` against `model`, writing
/// it to `out_x` (`len` doubles) and the gradient query count to
/// `out_queries` when that is non-null.
///
/// # Safety
/// `x` and `out_x` must each point to `len` doubles; `out_queries` must be
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn vt_attack_run(
    model: *const VtModel,
    config: *const VtAttackConfig,
    x: *const f64,
    len: usize,
    label: usize,
    seed: u64,
    out_x: *mut f64,
    out_queries: *mut usize,
) -> VtStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let cfg = &config.as_ref().ok_or_else(|| null("config"))?.0;
        if out_x.is_null() {
            return Err(null("out_x"));
        }
        let x = input_tensor(m, x, len)?;
        let res = run_attack(&x, label, &model_provider(m), cfg, &mut Rng::new(seed, 0))?;
        std::slice::from_raw_parts_mut(out_x, len).copy_from_slice(res.x_adv.data());
        if !out_queries.is_null() {
            *out_queries = res.queries;
        }
        Ok(())
    })
}
