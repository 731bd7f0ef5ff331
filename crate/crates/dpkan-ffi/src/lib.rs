//! C ABI for the dpkan library: opaque model handles, integer status
//! codes, and a thread-local last-error message. The generated header
//! lands in include/dpkan.h at build time.
//!
//! Conventions: functions returning `int32_t` use 0 for success and a
//! negative `DPKAN_ERR_*` code otherwise; constructors return null on
//! failure. `dpkan_last_error_message` describes the most recent failure
//! on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use dpkan::error::Error;
use dpkan::experiment::{run_experiment, ExperimentConfig};
use dpkan::layers::Model;
use dpkan::serialize;

pub const DPKAN_OK: i32 = 0;
pub const DPKAN_ERR_NULL_POINTER: i32 = -1;
pub const DPKAN_ERR_ARGUMENT: i32 = -2;
pub const DPKAN_ERR_SHAPE: i32 = -3;
pub const DPKAN_ERR_PARSE: i32 = -4;
pub const DPKAN_ERR_FORMAT: i32 = -5;
pub const DPKAN_ERR_IO: i32 = -6;
pub const DPKAN_ERR_DIVERGED: i32 = -7;
pub const DPKAN_ERR_INFEASIBLE: i32 = -8;
pub const DPKAN_ERR_UTF8: i32 = -9;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let cleaned: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(cleaned).unwrap());
}

fn code_for(err: &Error) -> i32 {
    match err {
        Error::Argument(_) => DPKAN_ERR_ARGUMENT,
        Error::Shape(_) => DPKAN_ERR_SHAPE,
        Error::Parse(_) => DPKAN_ERR_PARSE,
        Error::BadMagic { .. } | Error::Truncated(_) | Error::VersionMismatch { .. } => {
            DPKAN_ERR_FORMAT
        }
        Error::Io(_) => DPKAN_ERR_IO,
        Error::Diverged { .. } => DPKAN_ERR_DIVERGED,
        Error::Infeasible(_) => DPKAN_ERR_INFEASIBLE,
    }
}

fn fail(err: Error) -> i32 {
    set_error(&err.to_string());
    code_for(&err)
}

/// Opaque handle to a trained model.
pub struct DpkanModel {
    inner: Model,
}

unsafe fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, i32> {
    if ptr.is_null() {
        set_error("null path");
        return Err(DPKAN_ERR_NULL_POINTER);
    }
    match unsafe { CStr::from_ptr(ptr) }.to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(DPKAN_ERR_UTF8)
        }
    }
}

/// Message describing the most recent error on this thread. The pointer
/// stays valid until the next failing dpkan call on the same thread.
#[no_mangle]
pub extern "C" fn dpkan_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn dpkan_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Load a model from a file written by `dpkan_model_save` or the CLI.
/// Returns null on failure.
#[no_mangle]
pub unsafe extern "C" fn dpkan_model_load(path: *const c_char) -> *mut DpkanModel {
    let path = match unsafe { path_arg(path) } {
        Ok(p) => p,
        Err(_) => return std::ptr::null_mut(),
    };
    match serialize::load_model(path) {
        Ok(inner) => Box::into_raw(Box::new(DpkanModel { inner })),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Write the model to a file.
#[no_mangle]
pub unsafe extern "C" fn dpkan_model_save(
    model: *const DpkanModel,
    path: *const c_char,
) -> i32 {
    if model.is_null() {
        set_error("null model");
        return DPKAN_ERR_NULL_POINTER;
    }
    let path = match unsafe { path_arg(path) } {
        Ok(p) => p,
        Err(code) => return code,
    };
    match serialize::save_model(&unsafe { &*model }.inner, path) {
        Ok(()) => DPKAN_OK,
        Err(e) => fail(e),
    }
}

/// Release a model handle. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn dpkan_model_free(model: *mut DpkanModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Number of trainable parameters, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn dpkan_model_param_count(model: *const DpkanModel) -> u64 {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.inner.param_count() as u64
}

/// Input dimension, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn dpkan_model_n_inputs(model: *const DpkanModel) -> u64 {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.inner.n_in() as u64
}

/// Output dimension, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn dpkan_model_n_outputs(model: *const DpkanModel) -> u64 {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.inner.n_out() as u64
}

/// Run one forward pass. `input` must hold `n_in` values and `output`
/// space for `n_out` values, matching the model dimensions.
#[no_mangle]
pub unsafe extern "C" fn dpkan_model_forward(
    model: *const DpkanModel,
    input: *const f64,
    n_in: u64,
    output: *mut f64,
    n_out: u64,
) -> i32 {
    if model.is_null() || input.is_null() || output.is_null() {
        set_error("null pointer argument");
        return DPKAN_ERR_NULL_POINTER;
    }
    let model = &unsafe { &*model }.inner;
    if n_in as usize != model.n_in() || n_out as usize != model.n_out() {
        set_error(&format!(
            "buffer dims {n_in}/{n_out} vs model dims {}/{}",
            model.n_in(),
            model.n_out()
        ));
        return DPKAN_ERR_SHAPE;
    }
    let x = unsafe { std::slice::from_raw_parts(input, n_in as usize) };
    match model.forward_sample(x) {
        Ok((y, _)) => {
            let out = unsafe { std::slice::from_raw_parts_mut(output, n_out as usize) };
            out.copy_from_slice(&y);
            DPKAN_OK
        }
        Err(e) => fail(e),
    }
}

/// Total (epsilon, delta)-DP spend of Poisson-subsampled DP training.
#[no_mangle]
pub unsafe extern "C" fn dpkan_compute_epsilon(
    sigma: f64,
    batch_size: u64,
    dataset_size: u64,
    epochs: u64,
    delta: f64,
    out_epsilon: *mut f64,
) -> i32 {
    if out_epsilon.is_null() {
        set_error("null output pointer");
        return DPKAN_ERR_NULL_POINTER;
    }
    match dpkan::accountant::compute_epsilon(
        sigma,
        batch_size as usize,
        dataset_size as usize,
        epochs as usize,
        delta,
    ) {
        Ok(spend) => {
            unsafe { *out_epsilon = spend.epsilon };
            DPKAN_OK
        }
        Err(e) => fail(e),
    }
}

/// Noise multiplier that spends `target_epsilon` under the same mechanism.
#[no_mangle]
pub unsafe extern "C" fn dpkan_calibrate_sigma(
    target_epsilon: f64,
    delta: f64,
    batch_size: u64,
    dataset_size: u64,
    epochs: u64,
    out_sigma: *mut f64,
) -> i32 {
    if out_sigma.is_null() {
        set_error("null output pointer");
        return DPKAN_ERR_NULL_POINTER;
    }
    match dpkan::accountant::calibrate_sigma(
        target_epsilon,
        delta,
        batch_size as usize,
        dataset_size as usize,
        epochs as usize,
    ) {
        Ok(sigma) => {
            unsafe { *out_sigma = sigma };
            DPKAN_OK
        }
        Err(e) => fail(e),
    }
}

/// Run a full experiment from a config file, optionally persisting
/// outputs to `out_dir` (nullable). On success writes the aggregate
/// test metric to `out_metric_mean`.
#[no_mangle]
pub unsafe extern "C" fn dpkan_run_experiment(
    config_path: *const c_char,
    out_dir: *const c_char,
    out_metric_mean: *mut f64,
) -> i32 {
    if out_metric_mean.is_null() {
        set_error("null output pointer");
        return DPKAN_ERR_NULL_POINTER;
    }
    let config_path = match unsafe { path_arg(config_path) } {
        Ok(p) => p,
        Err(code) => return code,
    };
    let out_dir = if out_dir.is_null() {
        None
    } else {
        match unsafe { path_arg(out_dir) } {
            Ok(p) => Some(p),
            Err(code) => return code,
        }
    };
    let cfg = match ExperimentConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    match run_experiment(&cfg, out_dir) {
        Ok(report) => {
            unsafe { *out_metric_mean = report.mean };
            DPKAN_OK
        }
        Err(e) => fail(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn c(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    #[test]
    fn version_is_a_c_string() {
        let v = unsafe { CStr::from_ptr(dpkan_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn compute_epsilon_matches_library() {
        let mut eps = 0.0;
        let code = unsafe { dpkan_compute_epsilon(1.0, 64, 60000, 15, 1e-5, &mut eps) };
        assert_eq!(code, DPKAN_OK);
        let direct = dpkan::accountant::compute_epsilon(1.0, 64, 60000, 15, 1e-5)
            .unwrap()
            .epsilon;
        assert_eq!(eps, direct);
    }

    #[test]
    fn compute_epsilon_error_path_sets_message() {
        let mut eps = 0.0;
        let code = unsafe { dpkan_compute_epsilon(-1.0, 64, 60000, 15, 1e-5, &mut eps) };
        assert_eq!(code, DPKAN_ERR_ARGUMENT);
        let msg = unsafe { CStr::from_ptr(dpkan_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("noise multiplier"));
    }

    #[test]
    fn calibrate_round_trips_through_ffi() {
        let mut sigma = 0.0;
        let code = unsafe { dpkan_calibrate_sigma(0.87, 1e-5, 64, 60000, 15, &mut sigma) };
        assert_eq!(code, DPKAN_OK);
        assert!((0.9..=1.1).contains(&sigma), "{sigma}");
    }

    #[test]
    fn model_handle_lifecycle() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let model = dpkan::layers::build_linear(3, 2).unwrap();
        serialize::save_model(&model, &path).unwrap();
        let cpath = c(path.to_str().unwrap());

        let handle = unsafe { dpkan_model_load(cpath.as_ptr()) };
        assert!(!handle.is_null());
        assert_eq!(unsafe { dpkan_model_param_count(handle) }, 8);
        assert_eq!(unsafe { dpkan_model_n_inputs(handle) }, 3);
        assert_eq!(unsafe { dpkan_model_n_outputs(handle) }, 2);

        let input = [0.5, -1.0, 2.0];
        let mut output = [0.0; 2];
        let code = unsafe {
            dpkan_model_forward(handle, input.as_ptr(), 3, output.as_mut_ptr(), 2)
        };
        assert_eq!(code, DPKAN_OK);
        let (direct, _) = model.forward_sample(&input).unwrap();
        assert_eq!(output.as_slice(), direct.as_slice());

        // Wrong dims are a shape error, not UB.
        let code = unsafe {
            dpkan_model_forward(handle, input.as_ptr(), 2, output.as_mut_ptr(), 2)
        };
        assert_eq!(code, DPKAN_ERR_SHAPE);

        // Round-trip through save.
        let path2 = dir.path().join("m2.bin");
        let cpath2 = c(path2.to_str().unwrap());
        assert_eq!(unsafe { dpkan_model_save(handle, cpath2.as_ptr()) }, DPKAN_OK);
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
        unsafe { dpkan_model_free(handle) };
    }

    #[test]
    fn load_missing_file_returns_null_with_message() {
        let cpath = c("/nonexistent/model.bin");
        let handle = unsafe { dpkan_model_load(cpath.as_ptr()) };
        assert!(handle.is_null());
        let msg = unsafe { CStr::from_ptr(dpkan_last_error_message()) };
        assert!(!msg.to_str().unwrap().is_empty());
    }

    #[test]
    fn run_experiment_through_ffi() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("exp.cfg");
        std::fs::write(
            &cfg,
            "version = 1\ntask = regression\nmodel = linear\nwidths = 2,1\n\
             data = synthetic\nsynthetic_n = 200\nsynthetic_d = 2\nsynthetic_noise = 0.05\n\
             private = false\nepochs = 60\nlearning_rate = 0.05\nbatch_size = 32\n",
        )
        .unwrap();
        let ccfg = c(cfg.to_str().unwrap());
        let out = dir.path().join("out");
        let cout = c(out.to_str().unwrap());
        let mut mean = 0.0;
        let code = unsafe { dpkan_run_experiment(ccfg.as_ptr(), cout.as_ptr(), &mut mean) };
        assert_eq!(code, DPKAN_OK);
        assert!(mean > 0.5, "{mean}");
        assert!(out.join("report.txt").exists());
    }

    #[test]
    fn null_arguments_are_rejected() {
        assert_eq!(
            unsafe { dpkan_model_save(std::ptr::null(), std::ptr::null()) },
            DPKAN_ERR_NULL_POINTER
        );
        let mut x = 0.0;
        assert_eq!(
            unsafe { dpkan_run_experiment(std::ptr::null(), std::ptr::null(), &mut x) },
            DPKAN_ERR_NULL_POINTER
        );
        assert_eq!(
            unsafe { dpkan_compute_epsilon(1.0, 1, 1, 1, 0.5, std::ptr::null_mut()) },
            DPKAN_ERR_NULL_POINTER
        );
        unsafe { dpkan_model_free(std::ptr::null_mut()) };
    }
}
