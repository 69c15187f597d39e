//! C ABI over the eegcog library.
//!
//! Every fallible call returns an [`EegcogStatus`]. On failure the message is
//! available from [`eegcog_last_error`] on the same thread until the next
//! failing call. Strings returned by the library are freed with
//! [`eegcog_string_free`], models with [`eegcog_svm_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use eegcog::config::RunConfig;
use eegcog::eval::{evaluate_all, Cohort};
use eegcog::ml::svm::{svm_train, Kernel, SvmModel};
use eegcog::report::ReportFile;
use eegcog::stats::{kruskal_wallis, rank_sum, TestMethod, TestResult};
use eegcog::synth::{Generator, ProfileSet};
use eegcog::Error;
use ndarray::ArrayView2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EegcogStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Computation = 3,
    Io = 4,
    Parse = 5,
    Config = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EegcogKernelKind {
    Linear = 0,
    Rbf = 1,
    Sigmoid = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EegcogTestMethod {
    RankSumExact = 0,
    RankSumNormal = 1,
    KruskalWallis = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EegcogTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: EegcogTestMethod,
}

/// Trained SVM. Opaque to C.
pub struct EegcogSvm {
    model: SvmModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> EegcogStatus {
    match err.kind() {
        "IoError" => EegcogStatus::Io,
        "ParseError" => EegcogStatus::Parse,
        "ConfigError" => EegcogStatus::Config,
        _ => EegcogStatus::Computation,
    }
}

struct Fail(EegcogStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(EegcogStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EegcogStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EegcogStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            EegcogStatus::Panic
        }
    }
}

fn cells(n_rows: usize, n_cols: usize) -> Result<usize, Fail> {
    n_rows
        .checked_mul(n_cols)
        .ok_or_else(|| Fail(EegcogStatus::InvalidArgument, "matrix size overflows".into()))
}

/// # Safety
/// `p` must point to `len` readable values, or be null with `len == 0`.
unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

fn to_c(r: TestResult) -> EegcogTestResult {
    EegcogTestResult {
        statistic: r.statistic,
        p_value: r.p_value,
        method: match r.method {
            TestMethod::RankSumExact => EegcogTestMethod::RankSumExact,
            TestMethod::RankSumNormal => EegcogTestMethod::RankSumNormal,
            TestMethod::KruskalWallis => EegcogTestMethod::KruskalWallis,
        },
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn eegcog_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn eegcog_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eegcog_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Two-sided Wilcoxon rank-sum test of `x` against `y`.
///
/// # Safety
/// `x` and `y` must point to `nx` and `ny` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eegcog_rank_sum(
    x: *const f64,
    nx: usize,
    y: *const f64,
    ny: usize,
    out: *mut EegcogTestResult,
) -> EegcogStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let r = rank_sum(input(x, nx, "x")?, input(y, ny, "y")?)?;
        *out = to_c(r);
        Ok(())
    })
}

/// Kruskal-Wallis test. `values` holds the groups back to back; group `g`
/// has `group_sizes[g]` entries.
///
/// # Safety
/// `group_sizes` must hold `n_groups` entries and `values` their sum; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eegcog_kruskal_wallis(
    values: *const f64,
    group_sizes: *const usize,
    n_groups: usize,
    out: *mut EegcogTestResult,
) -> EegcogStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let sizes = input(group_sizes, n_groups, "group_sizes")?;
        let total: usize = sizes.iter().sum();
        let all = input(values, total, "values")?;
        let mut groups = Vec::with_capacity(sizes.len());
        let mut at = 0;
        for &n in sizes {
            groups.push(&all[at..at + n]);
            at += n;
        }
        *out = to_c(kruskal_wallis(&groups)?);
        Ok(())
    })
}

/// Welch PSD of one channel. Writes up to `capacity` bins into `freqs` and
/// `power` and the bin count into `n_bins`. When `capacity` is too small,
/// only `n_bins` is written and `BufferTooSmall` is returned.
///
/// # Safety
/// `signal` must hold `len` doubles; `freqs` and `power` must each hold
/// `capacity` doubles; `n_bins` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eegcog_welch(
    signal: *const f64,
    len: usize,
    fs: f64,
    window_len: usize,
    overlap: f64,
    freqs: *mut f64,
    power: *mut f64,
    capacity: usize,
    n_bins: *mut usize,
) -> EegcogStatus {
    guard(|| {
        if n_bins.is_null() {
            return Err(null("n_bins"));
        }
        let psd = eegcog::spectral::welch(input(signal, len, "signal")?, fs, window_len, overlap)?;
        let n = psd.freqs.len();
        *n_bins = n;
        if capacity < n {
            return Err(Fail(EegcogStatus::BufferTooSmall, format!("need {n} bins, capacity {capacity}")));
        }
        if freqs.is_null() || power.is_null() {
            return Err(null("freqs/power"));
        }
        slice::from_raw_parts_mut(freqs, n).copy_from_slice(&psd.freqs);
        for (dst, src) in slice::from_raw_parts_mut(power, n).iter_mut().zip(psd.power.row(0)) {
            *dst = *src;
        }
        Ok(())
    })
}

/// Trains a binary SVM on row-major `x` (`n_rows × n_cols`) with labels ±1.
/// `kernel` is an [`EegcogKernelKind`] value. `gamma` is ignored for the
/// linear kernel; `coef0` is used by sigmoid only.
///
/// # Safety
/// `x` must hold `n_rows·n_cols` doubles, `y` `n_rows` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eegcog_svm_train(
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    y: *const f64,
    kernel: u32,
    gamma: f64,
    coef0: f64,
    c: f64,
    out: *mut *mut EegcogSvm,
) -> EegcogStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let data = input(x, cells(n_rows, n_cols)?, "x")?;
        let view = ArrayView2::from_shape((n_rows, n_cols), data)
            .map_err(|e| Fail(EegcogStatus::InvalidArgument, e.to_string()))?;
        let kernel = match kernel {
            k if k == EegcogKernelKind::Linear as u32 => Kernel::Linear,
            k if k == EegcogKernelKind::Rbf as u32 => Kernel::Rbf { gamma },
            k if k == EegcogKernelKind::Sigmoid as u32 => Kernel::Sigmoid { gamma, coef0 },
            k => return Err(Fail(EegcogStatus::InvalidArgument, format!("unknown kernel kind {k}"))),
        };
        let model = svm_train(view, input(y, n_rows, "y")?, kernel, c)?;
        *out = Box::into_raw(Box::new(EegcogSvm { model }));
        Ok(())
    })
}

/// Decision values `f(x)` for each row of `x`, written into `out`.
///
/// # Safety
/// `model` must come from [`eegcog_svm_train`]; `x` must hold
/// `n_rows·n_cols` doubles and `out` `n_rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn eegcog_svm_decision(
    model: *const EegcogSvm,
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    out: *mut f64,
) -> EegcogStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() && n_rows > 0 {
            return Err(null("out"));
        }
        let view = ArrayView2::from_shape((n_rows, n_cols), input(x, cells(n_rows, n_cols)?, "x")?)
            .map_err(|e| Fail(EegcogStatus::InvalidArgument, e.to_string()))?;
        let d = model.model.decision(view)?;
        if n_rows > 0 {
            slice::from_raw_parts_mut(out, n_rows).copy_from_slice(&d);
        }
        Ok(())
    })
}

/// Number of support vectors, or 0 for a null model.
///
/// # Safety
/// `model` must be null or come from [`eegcog_svm_train`].
#[no_mangle]
pub unsafe extern "C" fn eegcog_svm_n_support(model: *const EegcogSvm) -> usize {
    model.as_ref().map_or(0, |m| m.model.alphas.len())
}

/// # Safety
/// `model` must be null or come from [`eegcog_svm_train`] and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eegcog_svm_free(model: *mut EegcogSvm) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Default run configuration as TOML. Free with [`eegcog_string_free`].
#[no_mangle]
pub extern "C" fn eegcog_default_config() -> *mut c_char {
    CString::new(RunConfig::default().to_toml()).map_or(ptr::null_mut(), CString::into_raw)
}

/// Runs the configured pipeline on a synthetic cohort and returns the JSON
/// report in `out_json`. A null `config_toml` means the default config.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated UTF-8 string; `out_json`
/// must be writable. Free the result with [`eegcog_string_free`].
#[no_mangle]
pub unsafe extern "C" fn eegcog_evaluate_synthetic(config_toml: *const c_char, out_json: *mut *mut c_char) -> EegcogStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        *out_json = ptr::null_mut();
        let cfg = if config_toml.is_null() {
            RunConfig::default()
        } else {
            let text = CStr::from_ptr(config_toml)
                .to_str()
                .map_err(|e| Fail(EegcogStatus::InvalidArgument, e.to_string()))?;
            RunConfig::from_toml(text)?
        };
        let profiles = match &cfg.synth.profile {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Fail(EegcogStatus::Io, format!("{}: {e}", p.display())))?;
                ProfileSet::from_toml(&text)?
            }
            None => ProfileSet::default_profiles(),
        };
        let gen = Generator::new(profiles)?;
        let cohort = Cohort::synthesize(&gen, cfg.synth.n_per_class, &cfg.tasks, cfg.seed, &[cfg.pipeline], &cfg)?;
        let json = ReportFile::new(&cfg, evaluate_all(&cohort, &cfg)?).to_json();
        *out_json = CString::new(json).map_err(|e| Fail(EegcogStatus::Computation, e.to_string()))?.into_raw();
        Ok(())
    })
}
