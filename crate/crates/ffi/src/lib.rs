//! C ABI over `dixlab`.
//!
//! Every fallible call returns a [`DixStatus`]; on failure the message is
//! available from [`dix_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function. Strings handed out by
//! the library are released with [`dix_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString, c_char};
use std::panic::{AssertUnwindSafe, catch_unwind};
use std::ptr;
use std::sync::Arc;

use dixlab::config::{ExperimentConfig, SymbolConfig};
use dixlab::quantize::{MatrixBudget, OperatorMatrix, assemble_operator, enumerate_frequencies};
use dixlab::spectral::eigenvalue_sequence;
use dixlab::symbol::{QuadSpec, ResidueSeries, Symbol, residue_series_log, wodzicki_residue};
use dixlab::{Complex64, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DixStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Budget = 4,
    Quadrature = 5,
    SupportLeak = 6,
    Eigensolver = 7,
    NotClassical = 8,
    NotModulated = 9,
    NotHermitian = 10,
    InsufficientGrid = 11,
    Config = 12,
    Io = 13,
    BufferTooSmall = 14,
    Panic = 15,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DixComplex {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for DixComplex {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

pub struct DixSymbol(Symbol);

pub struct DixOperator(OperatorMatrix);

pub struct DixResidueSeries(ResidueSeries);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(DixStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidInput(_) => DixStatus::InvalidInput,
            Error::Budget { .. } => DixStatus::Budget,
            Error::Quadrature(_) => DixStatus::Quadrature,
            Error::SupportLeak(_) => DixStatus::SupportLeak,
            Error::Eigensolver { .. } => DixStatus::Eigensolver,
            Error::NotClassical => DixStatus::NotClassical,
            Error::NotModulated(_) => DixStatus::NotModulated,
            Error::NotHermitian(_) => DixStatus::NotHermitian,
            Error::InsufficientGrid(_) => DixStatus::InsufficientGrid,
            Error::Config(_) => DixStatus::Config,
            Error::Cache(_) | Error::Io(_) => DixStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DixStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DixStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            DixStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(DixStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|e| Failure(DixStatus::InvalidUtf8, format!("`{what}`: {e}")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    unsafe { out.write(value) };
    Ok(())
}

fn into_c(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(DixStatus::InvalidInput, "output contains a NUL byte".into()))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[unsafe(no_mangle)]
pub extern "C" fn dix_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[unsafe(no_mangle)]
pub extern "C" fn dix_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn dix_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

fn symbol_from(cfg: Result<SymbolConfig, String>, d: usize, out: *mut *mut DixSymbol) -> Result<(), Failure> {
    let cfg = cfg.map_err(|e| Failure(DixStatus::Config, e))?;
    let sym = cfg.build(d)?;
    unsafe { put(out, Box::into_raw(Box::new(DixSymbol(sym))), "out") }
}

/// Builds a symbol on `T^d` from a TOML symbol table (`kind = "classical"`, ...).
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn dix_symbol_from_toml(toml: *const c_char, d: usize, out: *mut *mut DixSymbol) -> DixStatus {
    guard(|| {
        let text = unsafe { text(toml, "toml") }?;
        symbol_from(toml::from_str(text).map_err(|e| e.to_string()), d, out)
    })
}

/// Same as [`dix_symbol_from_toml`] with a JSON object.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn dix_symbol_from_json(json: *const c_char, d: usize, out: *mut *mut DixSymbol) -> DixStatus {
    guard(|| {
        let text = unsafe { text(json, "json") }?;
        symbol_from(serde_json::from_str(text).map_err(|e| e.to_string()), d, out)
    })
}

/// # Safety
/// `sym` must be null or a handle from a `dix_symbol_from_*` call, freed once.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn dix_symbol_free(sym: *mut DixSymbol) {
    if !sym.is_null() {
        drop(unsafe { Box::from_raw(sym) });
    }
}

/// Dimension of the symbol, 0 for a null handle.
///
/// # Safety
/// `sym` must be null or a live handle.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn dix_symbol_dim(sym: *const DixSymbol) -> usize {
    unsafe { sym.as_ref() }.map_or(0, |s| s.0.dim())
}

/// `p(x, ξ)`; `x` and `xi` hold `dim` values each.
///
/// # Safety
/// `sym` must be live, `x` and `xi` readable for `dim` doubles, `out` writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn dix_symbol_eval(
    sym: *const DixSymbol,
    x: *const f64,
    xi: *const f64,
    out: *mut DixComplex,
) -> DixStatus {
    guard(|| {
        let sym = unsafe { handle(sym, "sym") }?;
        let d = sym.0.dim();
        let (x, xi) = unsafe { (slice(x, d, "x")?, slice(xi, d, "xi")?) };
        unsafe { put(out, sym.0.eval(x, xi).into(), "out") }
    })
}

/// Wodzicki residue of a classical symbol.
///
/// # Safety
/// `sym` must be live and `out` writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn dix_symbol_wodzicki_residue(sym: *const DixSymbol, out: *mut DixComplex) -> DixStatus {
    guard(|| {
        let sym = unsafe { handle(sym, "sym") }?;
        let r = wodzicki_residue(&sym.0, &QuadSpec::for_dim(sym.0.dim()))?;
        unsafe { put(out, r.into(), "out") }
    })
}

/// Residue series on a strictly increasing grid of `log n` values.
///
/// # Safety
/// `sym` must be live, `log_n` readable for `len` doubles, `out` writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn dix_residue_series(
    sym: *const DixSymbol,
    log_n: *const f64,
    len: usize,
    out: *mut *mut DixResidueSeries,
) -> DixStatus {
    guard(|| {
        let sym = unsafe { handle(sym, "sym") }?;
        let log_n = unsafe { slice(log_n, len, "log_n") }?;
        let rs = residue_series_log(&sym.0, log_n, &QuadSpec::for_dim(sym.0.dim()))?;
        unsafe { put(out, Box::into_raw(Box::new(DixResidueSeries(rs))), "out") }
    })
}

/// # Safety
/// `series` must be null or a live handle.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn dix_residue_series_len(series: *const DixResidueSeries) -> usize {
    unsafe { series.as_ref() }.map_or(0, |s| s.0.len())
}

/// Grid point `i` as `log n` and its residue value.
///
/// # Safety
/// `series` must be live; `log_n` and `value` writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn dix_residue_series_get(
    series: *const DixResidueSeries,
    i: usize,
    log_n: *mut f64,
    value: *mut DixComplex,
) -> DixStatus {
    guard(|| {
        let s = &unsafe { handle(series, "series") }?.0;
        if i >= s.len() {
            return Err(Failure(DixStatus::InvalidInput, format!("index {i} out of range for {} points", s.len())));
        }
        unsafe {
            put(log_n, s.log_n[i], "log_n")?;
            put(value, s.res[i].into(), "value")
        }
    })
}

/// # Safety
/// `series` must be null or a handle from [`dix_residue_series`], freed once.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn dix_residue_series_free(series: *mut DixResidueSeries) {
    if !series.is_null() {
        drop(unsafe { Box::from_raw(series) });
    }
}

/// Torus quantization of `sym` on frequencies `|m|_∞ ≤ k`. A `max_n` of 0
/// uses the default budget (or `DIXLAB_MAX_N`).
///
/// # Safety
/// `sym` must be live and `out` writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn dix_operator_assemble(
    sym: *const DixSymbol,
    k: usize,
    max_n: usize,
    out: *mut *mut DixOperator,
) -> DixStatus {
    guard(|| {
        let sym = unsafe { handle(sym, "sym") }?;
        let budget = if max_n == 0 { MatrixBudget::from_env() } else { MatrixBudget(max_n) };
        let basis = Arc::new(enumerate_frequencies(sym.0.dim(), k, budget)?);
        let t = assemble_operator(&sym.0, &basis, QuadSpec::for_dim(sym.0.dim()).x_nodes)?;
        unsafe { put(out, Box::into_raw(Box::new(DixOperator(t))), "out") }
    })
}

/// # Safety
/// `op` must be null or a live handle.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn dix_operator_size(op: *const DixOperator) -> usize {
    unsafe { op.as_ref() }.map_or(0, |o| o.0.size())
}

/// # Safety
/// `op` must be live and `out` writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn dix_operator_trace(op: *const DixOperator, out: *mut DixComplex) -> DixStatus {
    guard(|| {
        let op = unsafe { handle(op, "op") }?;
        unsafe { put(out, op.0.trace().into(), "out") }
    })
}

/// Eigenvalues ordered by decreasing modulus into `buf`, which must hold
/// `dix_operator_size(op)` entries.
///
/// # Safety
/// `op` must be live and `buf` writable for `cap` entries.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn dix_operator_eigenvalues(op: *const DixOperator, buf: *mut DixComplex, cap: usize) -> DixStatus {
    guard(|| {
        let op = unsafe { handle(op, "op") }?;
        let n = op.0.size();
        if cap < n {
            return Err(Failure(DixStatus::BufferTooSmall, format!("need {n} entries, got {cap}")));
        }
        if n == 0 {
            return Ok(());
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        let eigs = eigenvalue_sequence(&op.0)?;
        let out = unsafe { std::slice::from_raw_parts_mut(buf, n) };
        for (o, v) in out.iter_mut().zip(eigs.values()) {
            *o = (*v).into();
        }
        Ok(())
    })
}

/// # Safety
/// `op` must be null or a handle from [`dix_operator_assemble`], freed once.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn dix_operator_free(op: *mut DixOperator) {
    if !op.is_null() {
        drop(unsafe { Box::from_raw(op) });
    }
}

/// Runs the experiment described by a TOML config, as `dixlab run` would,
/// without writing files. `report_json` and `csv` receive owned strings;
/// `passed` receives 1 or 0. Output handles may be null to skip them.
///
/// # Safety
/// `config` must be a NUL-terminated string; non-null outputs writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn dix_run_config(
    config: *const c_char,
    report_json: *mut *mut c_char,
    csv: *mut *mut c_char,
    passed: *mut i32,
) -> DixStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_toml(unsafe { text(config, "config") }?)?;
        let outcome = dixlab::cli::run(&cfg)?;
        let report = serde_json::to_string_pretty(&outcome.report)
            .map_err(|e| Failure(DixStatus::InvalidInput, e.to_string()))?;
        unsafe {
            if !passed.is_null() {
                passed.write(outcome.passed as i32);
            }
            if !report_json.is_null() {
                report_json.write(into_c(report)?);
            }
            if !csv.is_null() {
                csv.write(into_c(outcome.csv)?);
            }
        }
        Ok(())
    })
}
