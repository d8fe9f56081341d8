//! C ABI over the quasix toolkit.
//!
//! Handles are opaque pointers owned by this library; every constructor has
//! a matching `_free`. Functions return a `QxStatus`; on failure the
//! thread-local message from `qx_last_error_message` describes the cause
//! (the violated constraint name comes through verbatim).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

use quasix::balls::{cover, envelope, verify_quasiextremal, BallParams};
use quasix::error::Error;
use quasix::grid::GridSet;
use quasix::transform::{bilinear_mc, score, QuadratureSpec};

/// Opaque voxel set handle.
pub struct QxGrid(GridSet);

/// Opaque ball parameter handle.
pub struct QxBall(BallParams);

/// Status codes; non-zero means failure.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum QxStatus {
    Ok = 0,
    NullArgument = 1,
    Parse = 2,
    Constraint = 3,
    EmptySet = 4,
    Resolution = 5,
    Internal = 6,
}

/// Incidence score of an ordered pair of sets.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct QxScore {
    pub incidence: f64,
    pub alpha: f64,
    pub alpha_star: f64,
    pub epsilon: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").expect("empty"));
}

fn set_error(msg: &str) {
    let cleaned: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(cleaned).expect("nul-free");
    });
}

fn status_of(err: &Error) -> QxStatus {
    match err {
        Error::EmptySet(_) | Error::NoIncidences => QxStatus::EmptySet,
        Error::ResolutionTooCoarse { .. } => QxStatus::Resolution,
        Error::Json(_) => QxStatus::Parse,
        Error::DualityViolated { .. }
        | Error::BasisNotOrthonormal { .. }
        | Error::OffManifold { .. }
        | Error::DeltaOutOfRange(_)
        | Error::InvalidGeometry(_)
        | Error::ConfigInvalid(_) => QxStatus::Constraint,
        _ => QxStatus::Internal,
    }
}

fn fail(err: Error) -> QxStatus {
    let code = status_of(&err);
    set_error(&err.to_string());
    code
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

/// Message for the most recent failure on this thread. Valid until the
/// next failing call; do not free.
#[no_mangle]
pub extern "C" fn qx_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn qx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parse a voxel set from its JSON encoding (dim/origin/spacing/shape plus
/// run-length encoded occupancy).
///
/// # Safety
/// `json` must be a valid NUL-terminated UTF-8 string and `out` a valid
/// pointer; the returned handle must be released with `qx_grid_free`.
#[no_mangle]
pub unsafe extern "C" fn qx_grid_from_json(
    json: *const c_char,
    out: *mut *mut QxGrid,
) -> QxStatus {
    if out.is_null() {
        return QxStatus::NullArgument;
    }
    let Some(text) = cstr_arg(json) else {
        set_error("json argument is null or not UTF-8");
        return QxStatus::NullArgument;
    };
    let value: serde_json::Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return fail(Error::Json(e)),
    };
    match GridSet::from_json(&value) {
        Ok(set) => {
            *out = Box::into_raw(Box::new(QxGrid(set)));
            QxStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `grid` must come from `qx_grid_from_json` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn qx_grid_free(grid: *mut QxGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Lebesgue measure of the set; 0 for a null handle.
///
/// # Safety
/// `grid` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn qx_grid_measure(grid: *const QxGrid) -> f64 {
    grid.as_ref().map(|g| g.0.measure()).unwrap_or(0.0)
}

/// Ambient dimension; 0 for a null handle.
///
/// # Safety
/// `grid` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn qx_grid_dim(grid: *const QxGrid) -> usize {
    grid.as_ref().map(|g| g.0.dim()).unwrap_or(0)
}

/// Point membership under the half-open voxel convention.
///
/// # Safety
/// `coords` must point to `len` doubles; `grid` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn qx_grid_contains(
    grid: *const QxGrid,
    coords: *const f64,
    len: usize,
) -> bool {
    let Some(g) = grid.as_ref() else { return false };
    if coords.is_null() || len != g.0.dim() {
        return false;
    }
    let slice = std::slice::from_raw_parts(coords, len);
    g.0.contains(slice)
}

/// Incidence score of a pair at the given t-lattice step.
///
/// # Safety
/// Both handles must be live; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qx_score_pair(
    e: *const QxGrid,
    estar: *const QxGrid,
    t_resolution: f64,
    out: *mut QxScore,
) -> QxStatus {
    let (Some(e), Some(estar)) = (e.as_ref(), estar.as_ref()) else {
        set_error("null grid handle");
        return QxStatus::NullArgument;
    };
    if out.is_null() {
        return QxStatus::NullArgument;
    }
    if !(t_resolution > 0.0) {
        set_error("t_resolution must be positive");
        return QxStatus::Constraint;
    }
    match score(&e.0, &estar.0, &QuadratureSpec::auto(t_resolution)) {
        Ok(s) => {
            *out = QxScore {
                incidence: s.incidence,
                alpha: s.alpha,
                alpha_star: s.alpha_star,
                epsilon: s.epsilon,
            };
            QxStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// Monte Carlo estimate of the incidence functional with standard error.
///
/// # Safety
/// Both handles must be live; `estimate` and `stderr_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qx_bilinear_mc(
    e: *const QxGrid,
    estar: *const QxGrid,
    seed: u64,
    samples: usize,
    estimate: *mut f64,
    stderr_out: *mut f64,
) -> QxStatus {
    let (Some(e), Some(estar)) = (e.as_ref(), estar.as_ref()) else {
        set_error("null grid handle");
        return QxStatus::NullArgument;
    };
    if estimate.is_null() || stderr_out.is_null() {
        return QxStatus::NullArgument;
    }
    match bilinear_mc(&e.0, &estar.0, seed, samples) {
        Ok((est, se)) => {
            *estimate = est;
            *stderr_out = se;
            QxStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// Parse and validate ball parameters from JSON (center_x, center_xstar,
/// basis, r, r_star, rho). Validation failures carry the constraint name.
///
/// # Safety
/// `json` must be a valid NUL-terminated UTF-8 string and `out` valid; the
/// returned handle must be released with `qx_ball_free`.
#[no_mangle]
pub unsafe extern "C" fn qx_ball_from_json(
    json: *const c_char,
    out: *mut *mut QxBall,
) -> QxStatus {
    if out.is_null() {
        return QxStatus::NullArgument;
    }
    let Some(text) = cstr_arg(json) else {
        set_error("json argument is null or not UTF-8");
        return QxStatus::NullArgument;
    };
    match serde_json::from_str::<BallParams>(text) {
        Ok(ball) => {
            *out = Box::into_raw(Box::new(QxBall(ball)));
            QxStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            QxStatus::Constraint
        }
    }
}

/// # Safety
/// `ball` must come from `qx_ball_from_json` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn qx_ball_free(ball: *mut QxBall) {
    if !ball.is_null() {
        drop(Box::from_raw(ball));
    }
}

/// Slab thickness parameter rho; NaN for a null handle.
///
/// # Safety
/// `ball` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn qx_ball_rho(ball: *const QxBall) -> f64 {
    ball.as_ref().map(|b| b.0.rho()).unwrap_or(f64::NAN)
}

/// Exact envelope measures 2^d rho prod r_j and 2^d rho prod r*_j.
///
/// # Safety
/// `ball` must be live; both output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qx_ball_envelope_measures(
    ball: *const QxBall,
    e_measure: *mut f64,
    estar_measure: *mut f64,
) -> QxStatus {
    let Some(b) = ball.as_ref() else {
        set_error("null ball handle");
        return QxStatus::NullArgument;
    };
    if e_measure.is_null() || estar_measure.is_null() {
        return QxStatus::NullArgument;
    }
    let env = envelope(&b.0);
    *e_measure = env.e_measure();
    *estar_measure = env.estar_measure();
    QxStatus::Ok
}

/// Score the rasterized envelope pair of a ball; epsilon is its empirical
/// quasiextremality constant.
///
/// # Safety
/// `ball` must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qx_ball_score(ball: *const QxBall, out: *mut QxScore) -> QxStatus {
    let Some(b) = ball.as_ref() else {
        set_error("null ball handle");
        return QxStatus::NullArgument;
    };
    if out.is_null() {
        return QxStatus::NullArgument;
    }
    match verify_quasiextremal(&b.0, &b.0.suggested_quadrature()) {
        Ok(s) => {
            *out = QxScore {
                incidence: s.incidence,
                alpha: s.alpha,
                alpha_star: s.alpha_star,
                epsilon: s.epsilon,
            };
            QxStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// Number of sub-balls in the covering of envelope fraction `delta`.
///
/// # Safety
/// `ball` must be live; `count` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qx_ball_cover_count(
    ball: *const QxBall,
    delta: f64,
    count: *mut usize,
) -> QxStatus {
    let Some(b) = ball.as_ref() else {
        set_error("null ball handle");
        return QxStatus::NullArgument;
    };
    if count.is_null() {
        return QxStatus::NullArgument;
    }
    match cover(&b.0, delta) {
        Ok(family) => {
            *count = family.len();
            QxStatus::Ok
        }
        Err(err) => fail(err),
    }
}

/// Serialize a grid back to its JSON encoding; free with `qx_string_free`.
///
/// # Safety
/// `grid` must be live; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qx_grid_to_json(
    grid: *const QxGrid,
    out: *mut *mut c_char,
) -> QxStatus {
    let Some(g) = grid.as_ref() else {
        set_error("null grid handle");
        return QxStatus::NullArgument;
    };
    if out.is_null() {
        return QxStatus::NullArgument;
    }
    let text = g.0.to_json().to_string();
    match CString::new(text) {
        Ok(cs) => {
            *out = cs.into_raw();
            QxStatus::Ok
        }
        Err(_) => {
            set_error("serialized JSON contained an interior NUL");
            QxStatus::Internal
        }
    }
}

/// # Safety
/// `s` must have been returned by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn qx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
