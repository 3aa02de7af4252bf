//! C ABI over `cardio-lm`.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free` function. Every fallible call returns a
//! [`CardioStatus`]; the message for the most recent failure on the calling
//! thread is available from [`cardio_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cardio_lm::config::{parse_config_text, RunConfig};
use cardio_lm::linalg::{DenseMatrix, DenseVector, LinalgError};
use cardio_lm::lm::{lm_train, DampingMode, LmConfig, LmError, ResidualProvider, Termination};
use cardio_lm::pipeline::{self, CliError};
use cardio_lm::saved_model::ModelFileError;
use cardio_lm::SavedModel;

/// Status codes. The first four match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CardioStatus {
    Ok = 0,
    Io = 1,
    Data = 2,
    Diverged = 3,
    InvalidArgument = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CardioDampingMode {
    Identity = 0,
    Diagonal = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CardioTermination {
    MaxIterations = 0,
    GradientConverged = 1,
    StepConverged = 2,
    SseReached = 3,
    LambdaOverflow = 4,
}

/// Opaque saved model: schema, normalization and network.
pub struct CardioModel {
    inner: SavedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: CardioStatus, msg: impl Into<String>) -> CardioStatus {
    set_error(msg);
    status
}

fn from_cli(e: CliError) -> CardioStatus {
    let status = match e.exit_code() {
        1 => CardioStatus::Io,
        3 => CardioStatus::Diverged,
        _ => CardioStatus::Data,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> CardioStatus) -> CardioStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(CardioStatus::Panic, "internal panic"),
    }
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, CardioStatus> {
    if p.is_null() {
        return Err(fail(
            CardioStatus::InvalidArgument,
            format!("{name} is null"),
        ));
    }
    CStr::from_ptr(p).to_str().map(PathBuf::from).map_err(|_| {
        fail(
            CardioStatus::InvalidArgument,
            format!("{name} is not UTF-8"),
        )
    })
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn cardio_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cardio_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a saved model. On success `*out` receives a handle to release with
/// [`cardio_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cardio_model_load(
    path: *const c_char,
    out: *mut *mut CardioModel,
) -> CardioStatus {
    guard(|| {
        if out.is_null() {
            return fail(CardioStatus::InvalidArgument, "out is null");
        }
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match SavedModel::load(&path) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(CardioModel { inner }));
                CardioStatus::Ok
            }
            Err(e @ ModelFileError::Io { .. }) => fail(CardioStatus::Io, e.to_string()),
            Err(e) => fail(CardioStatus::Data, e.to_string()),
        }
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cardio_model_save(
    model: *const CardioModel,
    path: *const c_char,
) -> CardioStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            return fail(CardioStatus::InvalidArgument, "model is null");
        };
        let path = match path_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match model.inner.save(path) {
            Ok(()) => CardioStatus::Ok,
            Err(e) => fail(CardioStatus::Io, e.to_string()),
        }
    })
}

/// Releases a handle from [`cardio_model_load`] or [`cardio_train`]. Null is
/// ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cardio_model_free(model: *mut CardioModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of raw feature values a row must contain; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cardio_model_feature_count(model: *const CardioModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.schema.num_features())
}

/// Scores one raw feature row (schema order, unnormalized).
///
/// # Safety
/// `features` must point to `len` doubles and `out_score` to one double.
#[no_mangle]
pub unsafe extern "C" fn cardio_model_score(
    model: *const CardioModel,
    features: *const f64,
    len: usize,
    out_score: *mut f64,
) -> CardioStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            return fail(CardioStatus::InvalidArgument, "model is null");
        };
        if features.is_null() || out_score.is_null() {
            return fail(CardioStatus::InvalidArgument, "null buffer");
        }
        let row = std::slice::from_raw_parts(features, len);
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return fail(CardioStatus::Data, format!("non-finite feature value {v}"));
        }
        match model.inner.score_row(row) {
            Ok(s) => {
                *out_score = s;
                CardioStatus::Ok
            }
            Err(e) => fail(CardioStatus::Data, e.to_string()),
        }
    })
}

/// Scores `n_rows` row-major rows of `n_features` raw values each into
/// `out_scores`.
///
/// # Safety
/// `rows` must hold `n_rows * n_features` doubles and `out_scores` `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn cardio_model_score_batch(
    model: *const CardioModel,
    rows: *const f64,
    n_rows: usize,
    n_features: usize,
    out_scores: *mut f64,
) -> CardioStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            return fail(CardioStatus::InvalidArgument, "model is null");
        };
        if n_rows == 0 {
            return CardioStatus::Ok;
        }
        if rows.is_null() || out_scores.is_null() {
            return fail(CardioStatus::InvalidArgument, "null buffer");
        }
        let data = std::slice::from_raw_parts(rows, n_rows * n_features).to_vec();
        let x = match DenseMatrix::new(n_rows, n_features, data) {
            Ok(x) => x,
            Err(e) => return fail(CardioStatus::Data, e.to_string()),
        };
        match model.inner.score_matrix(&x) {
            Ok(scores) => {
                std::slice::from_raw_parts_mut(out_scores, n_rows)
                    .copy_from_slice(scores.as_slice());
                CardioStatus::Ok
            }
            Err(e) => fail(CardioStatus::Data, e.to_string()),
        }
    })
}

/// Runs the training pipeline. `config_path` may be null; `data_path` and
/// `out_dir` override the config. On success, if `out_model` is non-null it
/// receives a handle to the trained model.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out_model` must be
/// null or valid.
#[no_mangle]
pub unsafe extern "C" fn cardio_train(
    config_path: *const c_char,
    data_path: *const c_char,
    out_dir: *const c_char,
    seed: u64,
    out_model: *mut *mut CardioModel,
) -> CardioStatus {
    guard(|| {
        let mut pairs = Vec::new();
        if !config_path.is_null() {
            let path = match path_arg(config_path, "config_path") {
                Ok(p) => p,
                Err(s) => return s,
            };
            let text = match std::fs::read_to_string(&path) {
                Ok(t) => t,
                Err(e) => return fail(CardioStatus::Io, format!("{}: {e}", path.display())),
            };
            match parse_config_text(&text) {
                Ok(p) => pairs = p,
                Err(e) => return fail(CardioStatus::Data, e.to_string()),
            }
        }
        for (key, arg) in [("data", data_path), ("out-dir", out_dir)] {
            if arg.is_null() {
                continue;
            }
            match path_arg(arg, key) {
                Ok(p) => pairs.push((key.to_string(), p.display().to_string())),
                Err(s) => return s,
            }
        }
        pairs.push(("seed".into(), seed.to_string()));
        let cfg = match RunConfig::from_pairs(&pairs) {
            Ok(c) => c,
            Err(e) => return fail(CardioStatus::Data, e.to_string()),
        };
        match pipeline::train(&cfg) {
            Ok(outcome) => {
                if !out_model.is_null() {
                    *out_model = Box::into_raw(Box::new(CardioModel {
                        inner: outcome.model,
                    }));
                }
                CardioStatus::Ok
            }
            Err(e) => from_cli(e),
        }
    })
}

/// Residual callback for [`cardio_lm_fit`].
///
/// Fills `residuals` (length `n_residuals`) with `r(β) = y − f(β)`. When
/// `jacobian` is non-null it must also fill it, row-major
/// `n_residuals × n_params`, with `∂f/∂β` (the model derivative, not the
/// residual derivative). Returns 0 on success; any other value aborts the
/// fit with `CARDIO_STATUS_DIVERGED`.
pub type CardioResidualFn = Option<
    unsafe extern "C" fn(
        user_data: *mut c_void,
        beta: *const f64,
        n_params: usize,
        residuals: *mut f64,
        n_residuals: usize,
        jacobian: *mut f64,
    ) -> i32,
>;

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CardioLmOptions {
    pub lambda0: f64,
    pub lambda_increase: f64,
    pub lambda_decrease: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub mode: CardioDampingMode,
    pub max_iterations: usize,
    pub gradient_tol: f64,
    pub step_tol: f64,
    pub sse_tol: f64,
}

impl From<&CardioLmOptions> for LmConfig {
    fn from(o: &CardioLmOptions) -> Self {
        LmConfig {
            lambda0: o.lambda0,
            lambda_increase: o.lambda_increase,
            lambda_decrease: o.lambda_decrease,
            lambda_max: o.lambda_max,
            lambda_min: o.lambda_min,
            mode: match o.mode {
                CardioDampingMode::Identity => DampingMode::Identity,
                CardioDampingMode::Diagonal => DampingMode::Diagonal,
            },
            max_iterations: o.max_iterations,
            gradient_tol: o.gradient_tol,
            step_tol: o.step_tol,
            sse_tol: o.sse_tol,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CardioLmSummary {
    pub proposals: usize,
    pub accepted: usize,
    pub initial_sse: f64,
    pub final_sse: f64,
    pub termination: CardioTermination,
}

#[no_mangle]
pub extern "C" fn cardio_lm_default_options() -> CardioLmOptions {
    let d = LmConfig::default();
    CardioLmOptions {
        lambda0: d.lambda0,
        lambda_increase: d.lambda_increase,
        lambda_decrease: d.lambda_decrease,
        lambda_max: d.lambda_max,
        lambda_min: d.lambda_min,
        mode: match d.mode {
            DampingMode::Identity => CardioDampingMode::Identity,
            DampingMode::Diagonal => CardioDampingMode::Diagonal,
        },
        max_iterations: d.max_iterations,
        gradient_tol: d.gradient_tol,
        step_tol: d.step_tol,
        sse_tol: d.sse_tol,
    }
}

struct CallbackProvider {
    f: unsafe extern "C" fn(*mut c_void, *const f64, usize, *mut f64, usize, *mut f64) -> i32,
    user_data: *mut c_void,
    n_params: usize,
    n_residuals: usize,
}

impl CallbackProvider {
    fn call(
        &self,
        beta: &DenseVector,
        jac: Option<&mut Vec<f64>>,
    ) -> Result<DenseVector, LinalgError> {
        let mut r = vec![0.0; self.n_residuals];
        let jac_ptr = jac.map_or(ptr::null_mut(), |j| j.as_mut_ptr());
        // SAFETY: buffers are sized as the callback contract states.
        let rc = unsafe {
            (self.f)(
                self.user_data,
                beta.as_slice().as_ptr(),
                self.n_params,
                r.as_mut_ptr(),
                self.n_residuals,
                jac_ptr,
            )
        };
        if rc != 0 {
            return Err(LinalgError::NonFinite {
                index: 0,
                value: f64::NAN,
            });
        }
        DenseVector::new(r)
    }
}

impl ResidualProvider for CallbackProvider {
    fn residual_len(&self) -> usize {
        self.n_residuals
    }

    fn param_len(&self) -> usize {
        self.n_params
    }

    fn residuals(&self, beta: &DenseVector) -> Result<DenseVector, LinalgError> {
        self.call(beta, None)
    }

    fn residuals_and_jacobian(
        &self,
        beta: &DenseVector,
    ) -> Result<(DenseVector, DenseMatrix), LinalgError> {
        let mut jac = vec![0.0; self.n_residuals * self.n_params];
        let r = self.call(beta, Some(&mut jac))?;
        Ok((r, DenseMatrix::new(self.n_residuals, self.n_params, jac)?))
    }
}

/// Minimizes `Σ rᵢ(β)²` starting from `beta` (length `n_params`), which is
/// overwritten with the result on success. `options` and `summary` may be
/// null.
///
/// # Safety
/// `beta` must hold `n_params` doubles; `callback` must honor the
/// [`CardioResidualFn`] contract.
#[no_mangle]
pub unsafe extern "C" fn cardio_lm_fit(
    callback: CardioResidualFn,
    user_data: *mut c_void,
    n_params: usize,
    n_residuals: usize,
    beta: *mut f64,
    options: *const CardioLmOptions,
    summary: *mut CardioLmSummary,
) -> CardioStatus {
    guard(|| {
        let Some(f) = callback else {
            return fail(CardioStatus::InvalidArgument, "callback is null");
        };
        if beta.is_null() || n_params == 0 || n_residuals == 0 {
            return fail(CardioStatus::InvalidArgument, "empty problem or null beta");
        }
        let cfg = options
            .as_ref()
            .map_or_else(LmConfig::default, LmConfig::from);
        let beta_slice = std::slice::from_raw_parts_mut(beta, n_params);
        let beta0 = match DenseVector::new(beta_slice.to_vec()) {
            Ok(b) => b,
            Err(e) => return fail(CardioStatus::InvalidArgument, e.to_string()),
        };
        let provider = CallbackProvider {
            f,
            user_data,
            n_params,
            n_residuals,
        };
        match lm_train(&provider, &beta0, &cfg) {
            Ok((result, history)) => {
                beta_slice.copy_from_slice(result.as_slice());
                if let Some(s) = summary.as_mut() {
                    *s = CardioLmSummary {
                        proposals: history.records.len(),
                        accepted: history.accepted().count(),
                        initial_sse: history.initial_sse,
                        final_sse: history.final_sse(),
                        termination: match history.termination {
                            Some(Termination::GradientConverged) => {
                                CardioTermination::GradientConverged
                            }
                            Some(Termination::StepConverged) => CardioTermination::StepConverged,
                            Some(Termination::SseReached) => CardioTermination::SseReached,
                            Some(Termination::LambdaOverflow) => CardioTermination::LambdaOverflow,
                            Some(Termination::MaxIterations) | None => {
                                CardioTermination::MaxIterations
                            }
                        },
                    };
                }
                CardioStatus::Ok
            }
            Err(e @ LmError::NonFiniteObjective { .. }) => {
                fail(CardioStatus::Diverged, e.to_string())
            }
            Err(e @ (LmError::InvalidConfig(_) | LmError::ParameterMismatch { .. })) => {
                fail(CardioStatus::InvalidArgument, e.to_string())
            }
            Err(e) => fail(CardioStatus::Data, e.to_string()),
        }
    })
}
