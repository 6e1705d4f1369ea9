//! C ABI over the `gph` library.
//!
//! Every object crosses the boundary as an opaque handle created by a
//! `*_new`/constructor function and released by the matching `*_free`.
//! Fallible functions return a [`GphStatus`] and write results through out
//! pointers; on failure [`gph_last_error_message`] describes the error.
//!
//! # Safety
//!
//! Handles must come from this library and must not be used after being
//! freed. Buffers passed with a length must hold at least that many elements.
//! Strings are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;

use gph::ladder::conserved_integral;
use gph::nls::{evolve, gaussian_ic, soliton_ic, EvolveParams};
use gph::operator::{build_w, build_w_product, normalize, parse, pretty_print, OperatorExpr};
use gph::separable::{apply_expr, product_state, trace};
use gph::spectral::{make_grid, normalize as normalize_wave, GridSpec, WaveField};
use gph::Error;

/// Result codes; `GPH_STATUS_OK` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GphStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    Numerical = 4,
    TooLarge = 5,
    Internal = 6,
}

/// Periodic grid on `[-L, L)`.
pub struct GphGrid(GridSpec);

/// Complex samples on a grid.
pub struct GphWave(WaveField);

/// Hierarchy operator expression in canonical form.
pub struct GphExpr(OperatorExpr);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> GphStatus {
    match err {
        Error::Parse(_) => GphStatus::ParseError,
        Error::NonFinite(_) | Error::ZeroField => GphStatus::Numerical,
        Error::TooLarge(_) => GphStatus::TooLarge,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => GphStatus::Internal,
        _ => GphStatus::InvalidArgument,
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (GphStatus, String)>) -> GphStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            GphStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GphStatus::Internal
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (GphStatus, String)>;
}

impl<T> IntoFfi<T> for gph::Result<T> {
    fn ffi(self) -> Result<T, (GphStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (GphStatus, String) {
    (GphStatus::NullPointer, format!("{what} is null"))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, (GphStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (GphStatus, String)> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_complex(re: *mut f64, im: *mut f64, v: Complex64) -> Result<(), (GphStatus, String)> {
    if re.is_null() || im.is_null() {
        return Err(null("output pointer"));
    }
    *re = v.re;
    *im = v.im;
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library.
#[no_mangle]
pub extern "C" fn gph_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gph_grid_new(
    n_points: usize,
    half_length: f64,
    out: *mut *mut GphGrid,
) -> GphStatus {
    guard(|| put(out, GphGrid(make_grid(n_points, half_length).ffi()?)))
}

/// # Safety
/// `grid` must be null or a handle from [`gph_grid_new`].
#[no_mangle]
pub unsafe extern "C" fn gph_grid_free(grid: *mut GphGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Build a wave from `len` real parts and, unless `im` is null, imaginary parts.
///
/// # Safety
/// `re` (and `im` if non-null) must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gph_wave_from_samples(
    grid: *const GphGrid,
    re: *const f64,
    im: *const f64,
    len: usize,
    out: *mut *mut GphWave,
) -> GphStatus {
    guard(|| {
        let g = get(grid, "grid")?.0;
        if re.is_null() {
            return Err(null("re"));
        }
        let re = std::slice::from_raw_parts(re, len);
        let values = if im.is_null() {
            re.iter().map(|&r| Complex64::new(r, 0.0)).collect()
        } else {
            let im = std::slice::from_raw_parts(im, len);
            re.iter()
                .zip(im)
                .map(|(&r, &i)| Complex64::new(r, i))
                .collect()
        };
        put(out, GphWave(WaveField::new(g, values).ffi()?))
    })
}

/// `eta sech(eta (x - x0)) exp(i v x / 2)`.
///
/// # Safety
/// `grid` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gph_wave_soliton(
    grid: *const GphGrid,
    eta: f64,
    velocity: f64,
    x0: f64,
    out: *mut *mut GphWave,
) -> GphStatus {
    guard(|| {
        let g = get(grid, "grid")?.0;
        put(out, GphWave(soliton_ic(g, eta, velocity, x0)))
    })
}

/// `a exp(-(x - x0)^2 / (2 w^2)) exp(i v x / 2)`.
///
/// # Safety
/// `grid` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gph_wave_gaussian(
    grid: *const GphGrid,
    amplitude: f64,
    width: f64,
    velocity: f64,
    x0: f64,
    out: *mut *mut GphWave,
) -> GphStatus {
    guard(|| {
        let g = get(grid, "grid")?.0;
        if !(width.is_finite() && width > 0.0) {
            return Err((
                GphStatus::InvalidArgument,
                format!("width = {width} must be positive"),
            ));
        }
        put(out, GphWave(gaussian_ic(g, amplitude, width, velocity, x0)))
    })
}

/// Unit-L2 copy of `wave`.
///
/// # Safety
/// `wave` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gph_wave_normalize(
    wave: *const GphWave,
    out: *mut *mut GphWave,
) -> GphStatus {
    guard(|| {
        let w = get(wave, "wave")?;
        put(out, GphWave(normalize_wave(&w.0).ffi()?))
    })
}

/// # Safety
/// `wave` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn gph_wave_free(wave: *mut GphWave) {
    if !wave.is_null() {
        drop(Box::from_raw(wave));
    }
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `wave` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gph_wave_len(wave: *const GphWave) -> usize {
    wave.as_ref().map_or(0, |w| w.0.len())
}

/// Copy samples into `re` and `im`, which must each hold `len` doubles.
///
/// # Safety
/// `re` and `im` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn gph_wave_copy_samples(
    wave: *const GphWave,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> GphStatus {
    guard(|| {
        let w = get(wave, "wave")?;
        if re.is_null() || im.is_null() {
            return Err(null("output buffer"));
        }
        if len != w.0.len() {
            return Err((
                GphStatus::InvalidArgument,
                format!("buffer length {len} does not match {} samples", w.0.len()),
            ));
        }
        let re = std::slice::from_raw_parts_mut(re, len);
        let im = std::slice::from_raw_parts_mut(im, len);
        for (m, v) in w.0.values().iter().enumerate() {
            re[m] = v.re;
            im[m] = v.im;
        }
        Ok(())
    })
}

/// `I_n(phi)` for `1 <= n <= 8`.
///
/// # Safety
/// `wave` must be a live handle; `re` and `im` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn gph_conserved_integral(
    wave: *const GphWave,
    n: u32,
    kappa: i32,
    re: *mut f64,
    im: *mut f64,
) -> GphStatus {
    guard(|| {
        let w = get(wave, "wave")?;
        if kappa != 1 && kappa != -1 {
            return Err((
                GphStatus::InvalidArgument,
                format!("kappa = {kappa} must be +1 or -1"),
            ));
        }
        put_complex(re, im, conserved_integral(&w.0, n, kappa).ffi()?)
    })
}

/// Strang split-step evolution to `t_final`; writes the final state.
///
/// # Safety
/// `wave` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gph_evolve(
    wave: *const GphWave,
    kappa: i32,
    dt: f64,
    t_final: f64,
    out: *mut *mut GphWave,
) -> GphStatus {
    guard(|| {
        let w = get(wave, "wave")?;
        let params = EvolveParams {
            kappa,
            dt,
            t_final,
            record_every: usize::MAX,
        };
        let mut traj = evolve(&w.0, &params).ffi()?;
        let (_, last) = traj.pop().expect("trajectory holds the initial state");
        put(out, GphWave(last))
    })
}

/// `W_n^j` for `1 <= n <= 10`, `j >= 1`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gph_expr_build_w(n: u32, j: u32, out: *mut *mut GphExpr) -> GphStatus {
    guard(|| put(out, GphExpr(build_w(n, j).ffi()?)))
}

/// Parse the textual form; the message of a parse error carries `line:column`.
///
/// # Safety
/// `src` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gph_expr_parse(src: *const c_char, out: *mut *mut GphExpr) -> GphStatus {
    guard(|| {
        if src.is_null() {
            return Err(null("src"));
        }
        let text = CStr::from_ptr(src)
            .to_str()
            .map_err(|e| (GphStatus::InvalidArgument, format!("src is not UTF-8: {e}")))?;
        let e = parse(text).map_err(|e| (GphStatus::ParseError, e.to_string()))?;
        put(out, GphExpr(normalize(&e)))
    })
}

/// Canonical text of `expr`; release with [`gph_string_free`]. Null on error.
///
/// # Safety
/// `expr` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gph_expr_to_string(expr: *const GphExpr) -> *mut c_char {
    let mut result = ptr::null_mut();
    guard(|| {
        let e = get(expr, "expr")?;
        let text =
            CString::new(pretty_print(&e.0)).map_err(|e| (GphStatus::Internal, e.to_string()))?;
        result = text.into_raw();
        Ok(())
    });
    result
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn gph_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Number of terms, or 0 for a null handle.
///
/// # Safety
/// `expr` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gph_expr_term_count(expr: *const GphExpr) -> usize {
    expr.as_ref().map_or(0, |e| e.0.term_count())
}

/// Structural equality after normalization.
///
/// # Safety
/// Both handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gph_expr_equal(
    a: *const GphExpr,
    b: *const GphExpr,
    out: *mut bool,
) -> GphStatus {
    guard(|| {
        let (a, b) = (get(a, "a")?, get(b, "b")?);
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = normalize(&a.0).terms == normalize(&b.0).terms;
        Ok(())
    })
}

/// # Safety
/// `expr` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn gph_expr_free(expr: *mut GphExpr) {
    if !expr.is_null() {
        drop(Box::from_raw(expr));
    }
}

/// `Tr((W_{n_1}^1 (x) W_{n_2}^{1+n_1} (x) ...) gamma^(k))` for the product state
/// of the unit-norm `wave`, with `k = n_1 + n_2 + ...`.
///
/// # Safety
/// `orders` must hold `len` values; `wave` must be live; `re`, `im` valid.
#[no_mangle]
pub unsafe extern "C" fn gph_trace_w_product(
    orders: *const u32,
    len: usize,
    wave: *const GphWave,
    kappa: i32,
    re: *mut f64,
    im: *mut f64,
) -> GphStatus {
    guard(|| {
        let w = get(wave, "wave")?;
        if orders.is_null() || len == 0 {
            return Err((
                GphStatus::InvalidArgument,
                "orders must be non-empty".into(),
            ));
        }
        if kappa != 1 && kappa != -1 {
            return Err((
                GphStatus::InvalidArgument,
                format!("kappa = {kappa} must be +1 or -1"),
            ));
        }
        let orders = std::slice::from_raw_parts(orders, len);
        let expr = build_w_product(orders).ffi()?;
        let k = orders.iter().sum();
        let gamma = product_state(&w.0, k).ffi()?;
        put_complex(re, im, trace(&apply_expr(&expr, &gamma, kappa).ffi()?))
    })
}
