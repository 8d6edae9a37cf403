//! C ABI over the tangled-currents library. Handles are opaque; every call
//! returns a `TcStatus` and leaves a message for `tc_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use tangled_currents::currents::Moment;
use tangled_currents::model::{single_site_moment, ModelSpec, Phi4Model};
use tangled_currents::spectral::{green_function, Family, GreenSize};
use tangled_currents::verifiers::{correlation, verify_griffiths2, verify_switching_ratio, CheckReport, SwitchingMode, Verdict};
use tangled_currents::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Domain = 3,
    Parameter = 4,
    Range = 5,
    Contract = 6,
    Capacity = 7,
    Truncation = 8,
    Ergodicity = 9,
    Divergence = 10,
    Degenerate = 11,
    Distance = 12,
    Config = 13,
    Io = 14,
    Panic = 15,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcVerdict {
    Pass = 0,
    Fail = 1,
    Inconclusive = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcFamilyKind {
    NearestNeighbour = 0,
    Exponential = 1,
    PowerLaw = 2,
}

/// A validated φ⁴ model.
pub struct TcModel {
    inner: Phi4Model,
}

/// A finished check with its JSON rendering.
pub struct TcReport {
    inner: CheckReport,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> TcStatus {
    match e {
        Error::Domain(_) => TcStatus::Domain,
        Error::Parameter { .. } => TcStatus::Parameter,
        Error::Range(_) => TcStatus::Range,
        Error::Contract(_) => TcStatus::Contract,
        Error::Capacity(_) => TcStatus::Capacity,
        Error::Truncation { .. } => TcStatus::Truncation,
        Error::Ergodicity(_) => TcStatus::Ergodicity,
        Error::Divergence(_) => TcStatus::Divergence,
        Error::Degenerate(_) => TcStatus::Degenerate,
        Error::Distance(_) => TcStatus::Distance,
        Error::Config(_) => TcStatus::Config,
        Error::Io(_) => TcStatus::Io,
    }
}

enum Fault {
    Null(&'static str),
    Utf8,
    Lib(Error),
}

impl From<Error> for Fault {
    fn from(e: Error) -> Self {
        Fault::Lib(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Fault>>(f: F) -> TcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TcStatus::Ok
        }
        Ok(Err(Fault::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            TcStatus::NullPointer
        }
        Ok(Err(Fault::Utf8)) => {
            set_error("string is not valid UTF-8");
            TcStatus::InvalidUtf8
        }
        Ok(Err(Fault::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            TcStatus::Panic
        }
    }
}

unsafe fn model_ref<'a>(m: *const TcModel) -> Result<&'a Phi4Model, Fault> {
    m.as_ref().map(|m| &m.inner).ok_or(Fault::Null("model"))
}

unsafe fn moment_from(p: *const u32, len: usize, model: &Phi4Model) -> Result<Moment, Fault> {
    if len != model.len() {
        return Err(Fault::Lib(Error::Contract(format!(
            "moment has {len} entries, model has {} vertices",
            model.len()
        ))));
    }
    if len == 0 {
        return Ok(Moment::zero(0));
    }
    if p.is_null() {
        return Err(Fault::Null("moment"));
    }
    Ok(Moment::from_vec(std::slice::from_raw_parts(p, len).to_vec()))
}

unsafe fn write<T>(out: *mut T, v: T, what: &'static str) -> Result<(), Fault> {
    if out.is_null() {
        return Err(Fault::Null(what));
    }
    *out = v;
    Ok(())
}

fn boxed_report(r: CheckReport) -> Result<*mut TcReport, Fault> {
    let text = serde_json::to_string(&serde_json::to_value(&r).map_err(Error::from)?).map_err(Error::from)?;
    let json = CString::new(text).map_err(|_| Fault::Utf8)?;
    Ok(Box::into_raw(Box::new(TcReport { inner: r, json })))
}

/// Message for the last failing call on this thread ("" after success).
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn tc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse a ModelSpec JSON document into a model handle.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_model_from_json(json: *const c_char, out: *mut *mut TcModel) -> TcStatus {
    guard(|| {
        if json.is_null() {
            return Err(Fault::Null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|_| Fault::Utf8)?;
        let model = ModelSpec::from_json(text)?.model()?;
        write(out, Box::into_raw(Box::new(TcModel { inner: model })), "out")
    })
}

/// # Safety
/// `model` must come from `tc_model_from_json` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tc_model_free(model: *mut TcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_model_vertex_count(model: *const TcModel, out: *mut usize) -> TcStatus {
    guard(|| write(out, model_ref(model)?.len(), "out"))
}

/// ⟨φ^order⟩ of the single-site measure.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_single_site_moment(g: f64, a: f64, order: i64, tol: f64, out: *mut f64) -> TcStatus {
    guard(|| {
        let p = tangled_currents::model::SingleSiteParams::new(g, a)?;
        write(out, single_site_moment(&p, order, tol)?, "out")
    })
}

/// ⟨φ_A⟩ with its certified error.
///
/// # Safety
/// `a` must point at `len` entries; `value` and `error` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_correlation(model: *const TcModel, a: *const u32, len: usize, value: *mut f64, error: *mut f64) -> TcStatus {
    guard(|| {
        let m = model_ref(model)?;
        let (v, e, _) = correlation(m, &moment_from(a, len, m)?)?;
        write(value, v, "value")?;
        write(error, e, "error")
    })
}

/// Switching ratio against the exact finite-N pairing probability.
///
/// # Safety
/// `a` and `b` must point at `len` entries each; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_verify_switching_exact(
    model: *const TcModel,
    a: *const u32,
    b: *const u32,
    len: usize,
    n: usize,
    tol: f64,
    out: *mut *mut TcReport,
) -> TcStatus {
    guard(|| {
        let m = model_ref(model)?;
        let (a, b) = (moment_from(a, len, m)?, moment_from(b, len, m)?);
        let r = verify_switching_ratio(m, &a, &b, None, &SwitchingMode::ExactN { n }, tol, 0)?;
        write(out, boxed_report(r)?, "out")
    })
}

/// ⟨φ_Aφ_B⟩ − ⟨φ_A⟩⟨φ_B⟩ ≥ 0.
///
/// # Safety
/// `a` and `b` must point at `len` entries each; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_verify_griffiths2(model: *const TcModel, a: *const u32, b: *const u32, len: usize, out: *mut *mut TcReport) -> TcStatus {
    guard(|| {
        let m = model_ref(model)?;
        let r = verify_griffiths2(m, &moment_from(a, len, m)?, &moment_from(b, len, m)?)?;
        write(out, boxed_report(r)?, "out")
    })
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tc_report_verdict(report: *const TcReport) -> TcVerdict {
    match report.as_ref().map(|r| r.inner.verdict) {
        Some(Verdict::Pass) => TcVerdict::Pass,
        Some(Verdict::Inconclusive) => TcVerdict::Inconclusive,
        _ => TcVerdict::Fail,
    }
}

/// # Safety
/// `report` must be a live handle; `lhs` and `rhs` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_report_values(report: *const TcReport, lhs: *mut f64, rhs: *mut f64) -> TcStatus {
    guard(|| {
        let r = report.as_ref().ok_or(Fault::Null("report"))?;
        write(lhs, r.inner.lhs.value, "lhs")?;
        write(rhs, r.inner.rhs.value, "rhs")
    })
}

/// JSON text owned by the report.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tc_report_json(report: *const TcReport) -> *const c_char {
    report.as_ref().map_or(std::ptr::null(), |r| r.json.as_ptr())
}

/// # Safety
/// `report` must come from a `tc_verify_*` call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tc_report_free(report: *mut TcReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// G(x, y) for the given interaction family; `l = 0` requests the L → ∞
/// limit. `p1`, `p2` are (μ, C) or (α, C) and ignored for nearest-neighbour.
///
/// # Safety
/// `x` and `y` must point at `d` entries; `value` and `error` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_green_function(
    kind: TcFamilyKind,
    p1: f64,
    p2: f64,
    d: usize,
    x: *const i64,
    y: *const i64,
    l: usize,
    tol: f64,
    value: *mut f64,
    error: *mut f64,
) -> TcStatus {
    guard(|| {
        if x.is_null() || y.is_null() {
            return Err(Fault::Null("site"));
        }
        let family = match kind {
            TcFamilyKind::NearestNeighbour => Family::NearestNeighbour,
            TcFamilyKind::Exponential => Family::Exponential { mu: p1, c: p2 },
            TcFamilyKind::PowerLaw => Family::PowerLaw { alpha: p1, c: p2 },
        };
        family.validate()?;
        let size = if l == 0 { GreenSize::limit() } else { GreenSize::Torus { l } };
        let (xs, ys) = (std::slice::from_raw_parts(x, d), std::slice::from_raw_parts(y, d));
        let g = green_function(&family, d, xs, ys, &size, tol)?;
        write(value, g.value, "value")?;
        write(error, g.error, "error")
    })
}
