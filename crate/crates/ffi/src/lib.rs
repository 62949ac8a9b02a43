//! C ABI over the `ultramedian` library.
//!
//! Every entry point returns a [`UmStatus`]; results are written through
//! out-pointers. On failure a description is kept per thread and can be
//! read with [`um_last_error_message`]. Point ids are 1-based.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ultramedian::generators::{generate, GenSpec};
use ultramedian::median::{approx_median, approx_median_theorem, brute_force_median, params_hk, ApproxParams, Audit};
use ultramedian::median::{Fallback, Mode};
use ultramedian::metric::{
    load_instance, DistanceMatrix, DistanceOracle, MetricSpace, PointId, Space, ValidateOptions, Verdict,
};
use ultramedian::{Error, Result};

/// Status codes; the non-zero values shared with the CLI use its exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UmStatus {
    Ok = 0,
    /// Argument outside its domain, or a size cap exceeded.
    Domain = 2,
    /// File system or serialization failure.
    Io = 3,
    /// Malformed input text or a space violating the metric axioms.
    InvalidInstance = 4,
    Assertion = 5,
    /// A required pointer argument was null.
    NullArgument = 64,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 65,
    /// A panic was caught at the boundary.
    Panic = 66,
    Internal = 70,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UmFallback {
    Auto = 0,
    ForceSample = 1,
    ForceExact = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UmMode {
    Sampled = 0,
    ExactFallback = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UmVerdict {
    Ultrametric = 0,
    MetricOnly = 1,
    Invalid = 2,
}

/// Parameters of the sampling algorithm. Fill with [`um_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct UmParams {
    pub epsilon: f64,
    pub c_h: f64,
    pub c_k: f64,
    pub seed: u64,
    pub fallback: UmFallback,
    /// Run the sampler at `epsilon / 4`.
    pub theorem: bool,
}

/// Result of a median computation. Audit fields are NaN when no audit
/// was requested.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct UmMedianReport {
    pub selected: u32,
    pub sample_cost: f64,
    pub exact_cost: f64,
    pub opt_cost: f64,
    pub ratio: f64,
    pub queries_used: u64,
    pub mode: UmMode,
}

/// Opaque handle to a finite space (distance matrix or dendrogram).
pub struct UmSpace {
    inner: Space,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_last_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> UmStatus {
    match err.exit_code() {
        2 => UmStatus::Domain,
        3 => UmStatus::Io,
        4 => UmStatus::InvalidInstance,
        5 => UmStatus::Assertion,
        _ => UmStatus::Internal,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Utf8(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> std::result::Result<(), Failure>) -> UmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(String::new());
            UmStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            let status = status_of(&e);
            set_last_error(e.to_string());
            status
        }
        Ok(Err(Failure::Null(arg))) => {
            set_last_error(format!("null pointer passed for `{arg}`"));
            UmStatus::NullArgument
        }
        Ok(Err(Failure::Utf8(arg))) => {
            set_last_error(format!("`{arg}` is not valid UTF-8"));
            UmStatus::InvalidUtf8
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_last_error(format!("panic: {msg}"));
            UmStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> std::result::Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &'static str) -> std::result::Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn string<'a>(p: *const c_char, name: &'static str) -> std::result::Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8(name))
}

fn boxed(space: Space) -> *mut UmSpace {
    Box::into_raw(Box::new(UmSpace { inner: space }))
}

/// Writes the last error of the calling thread into `buf` as a
/// NUL-terminated string, truncated to `len` bytes. Returns the number of
/// bytes needed including the terminator; 1 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn um_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn um_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a space from a row-major `n * n` distance matrix.
///
/// # Safety
/// `data` must point to `n * n` readable doubles; `out_space` must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_space_from_matrix(data: *const f64, n: usize, out_space: *mut *mut UmSpace) -> UmStatus {
    guard(|| {
        let out_space = out(out_space, "out_space")?;
        let len = n
            .checked_mul(n)
            .ok_or_else(|| Error::Domain(format!("matrix size {n} overflows")))?;
        let values = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(deref(data, "data")?, len).to_vec()
        };
        *out_space = boxed(DistanceMatrix::from_flat(n, values)?.into());
        Ok(())
    })
}

/// Loads a matrix or dendrogram file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_space` must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_space_load(path: *const c_char, out_space: *mut *mut UmSpace) -> UmStatus {
    guard(|| {
        let out_space = out(out_space, "out_space")?;
        let path = string(path, "path")?;
        *out_space = boxed(load_instance(Path::new(path))?);
        Ok(())
    })
}

/// Generates an instance from a spec such as `k-level:n=64,k=3,seed=1`.
///
/// # Safety
/// `spec` must be a NUL-terminated string; `out_space` must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_space_generate(spec: *const c_char, out_space: *mut *mut UmSpace) -> UmStatus {
    guard(|| {
        let out_space = out(out_space, "out_space")?;
        let spec: GenSpec = string(spec, "spec")?.parse()?;
        *out_space = boxed(generate(&spec)?.space);
        Ok(())
    })
}

/// Releases a space. Null is ignored.
///
/// # Safety
/// `space` must be null or a handle returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn um_space_free(space: *mut UmSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Number of points in the space; 0 for a null handle.
///
/// # Safety
/// `space` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn um_space_len(space: *const UmSpace) -> usize {
    space.as_ref().map_or(0, |s| s.inner.len())
}

/// Distance between points `a` and `b` (1-based).
///
/// # Safety
/// `space` must be a live handle; `out_distance` must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_space_distance(space: *const UmSpace, a: u32, b: u32, out_distance: *mut f64) -> UmStatus {
    guard(|| {
        let space = &deref(space, "space")?.inner;
        let out_distance = out(out_distance, "out_distance")?;
        *out_distance = DistanceOracle::new(space).query(PointId::new(a)?, PointId::new(b)?)?;
        Ok(())
    })
}

/// Checks the metric and ultrametric axioms.
///
/// # Safety
/// `space` must be a live handle; `out_verdict` must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_validate(
    space: *const UmSpace,
    allow_pseudo: bool,
    out_verdict: *mut UmVerdict,
) -> UmStatus {
    guard(|| {
        let space = &deref(space, "space")?.inner;
        let out_verdict = out(out_verdict, "out_verdict")?;
        let opts = ValidateOptions {
            allow_pseudo,
            ..ValidateOptions::default()
        };
        *out_verdict = match space.validate(&opts)?.verdict {
            Verdict::Ultrametric => UmVerdict::Ultrametric,
            Verdict::MetricOnly(_) => UmVerdict::MetricOnly,
            Verdict::Invalid(_) => UmVerdict::Invalid,
        };
        Ok(())
    })
}

/// Exact 1-median by exhaustive search (lowest id among ties).
///
/// # Safety
/// `space` must be a live handle; `out_selected` and `out_cost` must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_brute_force_median(
    space: *const UmSpace,
    out_selected: *mut u32,
    out_cost: *mut f64,
) -> UmStatus {
    guard(|| {
        let space = &deref(space, "space")?.inner;
        let out_selected = out(out_selected, "out_selected")?;
        let out_cost = out(out_cost, "out_cost")?;
        let (best, cost) = brute_force_median(space)?;
        *out_selected = best.get();
        *out_cost = cost;
        Ok(())
    })
}

/// Writes the default parameters.
///
/// # Safety
/// `out_params` must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_params_default(out_params: *mut UmParams) -> UmStatus {
    guard(|| {
        let p = ApproxParams::default();
        *out(out_params, "out_params")? = UmParams {
            epsilon: p.epsilon,
            c_h: p.c_h,
            c_k: p.c_k,
            seed: p.seed,
            fallback: UmFallback::Auto,
            theorem: false,
        };
        Ok(())
    })
}

/// Candidate and evaluator sample sizes for the given parameters.
///
/// # Safety
/// `out_h` and `out_k` must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_params_hk(epsilon: f64, c_h: f64, c_k: f64, out_h: *mut u64, out_k: *mut u64) -> UmStatus {
    guard(|| {
        let out_h = out(out_h, "out_h")?;
        let out_k = out(out_k, "out_k")?;
        let (h, k) = params_hk(epsilon, c_h, c_k)?;
        *out_h = h;
        *out_k = k;
        Ok(())
    })
}

fn to_params(p: &UmParams) -> ApproxParams {
    ApproxParams::new(p.epsilon)
        .with_constants(p.c_h, p.c_k)
        .with_seed(p.seed)
        .with_fallback(match p.fallback {
            UmFallback::Auto => Fallback::Auto,
            UmFallback::ForceSample => Fallback::ForceSample,
            UmFallback::ForceExact => Fallback::ForceExact,
        })
}

fn run_median(space: &Space, params: &UmParams, audit: bool) -> Result<UmMedianReport> {
    let oracle = DistanceOracle::new(space);
    let approx = to_params(params);
    let report = if params.theorem {
        let audit = if audit { Audit::BruteForce } else { Audit::None };
        approx_median_theorem(&oracle, &approx, audit)?
    } else {
        approx_median(&oracle, &approx, audit)?
    };
    Ok(UmMedianReport {
        selected: report.selected.get(),
        sample_cost: report.sample_cost,
        exact_cost: report.exact_cost.unwrap_or(f64::NAN),
        opt_cost: report.opt_cost.unwrap_or(f64::NAN),
        ratio: report.ratio.unwrap_or(f64::NAN),
        queries_used: report.queries_used,
        mode: match report.mode {
            Mode::Sampled => UmMode::Sampled,
            Mode::ExactFallback => UmMode::ExactFallback,
        },
    })
}

/// Approximate 1-median. With `audit` the exact cost, optimum and ratio
/// are filled in at O(n^2) extra reads, which are not counted in
/// `queries_used`.
///
/// # Safety
/// `space` and `params` must be valid; `out_report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn um_approx_median(
    space: *const UmSpace,
    params: *const UmParams,
    audit: bool,
    out_report: *mut UmMedianReport,
) -> UmStatus {
    guard(|| {
        let space = &deref(space, "space")?.inner;
        let params = deref(params, "params")?;
        let out_report = out(out_report, "out_report")?;
        *out_report = run_median(space, params, audit)?;
        Ok(())
    })
}
