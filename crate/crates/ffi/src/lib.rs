//! C ABI for `robustexp`.
//!
//! Models and chains are opaque heap handles created from JSON documents and
//! released with the matching `*_free` function. Every function returns an
//! [`RxStatus`]; on failure [`rx_last_error_message`] describes the error for
//! the calling thread. Panics are caught at the boundary and reported as
//! [`RxStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use robustexp::document::{parse_model, ChainDoc};
use robustexp::kolmogorov::{DiracPathFamily, FullSimplexFamily};
use robustexp::{
    conjugate, hat_vs_bar_gap_demo, robust_eval, scenario_membership, Error, ExpectationModel, FiniteSubset,
    GaussianFunction, MarginalFamily, MarkovChain, ParamBox, Scenario, StateSpace, TimeGrid,
};

/// Status codes returned by every function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Dimension = 4,
    Domain = 5,
    Argument = 6,
    Precondition = 7,
    Numeric = 8,
    Consistency = 9,
    Capacity = 10,
    Panic = 11,
}

/// An expectation model.
pub struct RxModel {
    inner: ExpectationModel,
}

/// A nonlinear Markov chain on a finite state space.
pub struct RxChain {
    inner: MarkovChain,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> RxStatus {
    match e {
        Error::Dimension { .. } => RxStatus::Dimension,
        Error::Domain(_) => RxStatus::Domain,
        Error::Argument(_) => RxStatus::Argument,
        Error::Precondition(_) => RxStatus::Precondition,
        Error::Numeric(_) => RxStatus::Numeric,
        Error::Consistency(_) => RxStatus::Consistency,
        Error::Capacity(_) => RxStatus::Capacity,
        Error::Parse(_) => RxStatus::Parse,
    }
}

enum Fail {
    Null(&'static str),
    Utf8(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> RxStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            RxStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            RxStatus::NullPointer
        }
        Ok(Err(Fail::Utf8(what))) => {
            set_error(&format!("{what} is not valid UTF-8"));
            RxStatus::InvalidUtf8
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            RxStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Utf8(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rx_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a model from a JSON model document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out_model` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rx_model_from_json(json: *const c_char, out_model: *mut *mut RxModel) -> RxStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        *slot = std::ptr::null_mut();
        let inner = parse_model(text(json, "json")?)?;
        *slot = Box::into_raw(Box::new(RxModel { inner }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`rx_model_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rx_model_free(model: *mut RxModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of states of the model's space.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rx_model_state_count(model: *const RxModel, out_len: *mut usize) -> RxStatus {
    guard(|| {
        *out(out_len, "out_len")? = handle(model, "model")?.inner.space().len();
        Ok(())
    })
}

/// `E(X)` for `x` of length `len`.
///
/// # Safety
/// `x` must point to `len` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rx_evaluate(
    model: *const RxModel,
    x: *const f64,
    len: usize,
    out_value: *mut f64,
) -> RxStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let v = m.inner.evaluate_values(slice(x, len, "x")?)?;
        *out(out_value, "out_value")? = v;
        Ok(())
    })
}

/// Penalty-form evaluation returning the value and the smallest maximizing
/// scenario index.
///
/// # Safety
/// `x` must point to `len` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rx_dual_eval(
    model: *const RxModel,
    x: *const f64,
    len: usize,
    out_value: *mut f64,
    out_argmax: *mut usize,
) -> RxStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let pm = m.inner.as_penalty().ok_or_else(|| {
            Error::Precondition(format!("dual evaluation needs a penalty model, got {}", m.inner.kind()))
        })?;
        let (v, k) = pm.dual_eval_values(slice(x, len, "x")?)?;
        *out(out_value, "out_value")? = v;
        *out(out_argmax, "out_argmax")? = k;
        Ok(())
    })
}

fn scenario(space: &StateSpace, w: &[f64]) -> Result<Scenario, Error> {
    Scenario::new(space, w.to_vec())
}

/// Convex conjugate at `mu`. `out_value` receives the exact value for penalty
/// models (possibly `+inf`) and the sup over the ball `|X| <= radius` otherwise.
///
/// # Safety
/// `mu` must point to `len` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rx_conjugate(
    model: *const RxModel,
    mu: *const f64,
    len: usize,
    radius: f64,
    out_value: *mut f64,
) -> RxStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let mu = scenario(m.inner.space(), slice(mu, len, "mu")?)?;
        let est = conjugate(&m.inner, &mu, radius)?;
        *out(out_value, "out_value")? = est.best();
        Ok(())
    })
}

/// Whether `mu` lies in the convex hull of a sublinear model's scenarios.
/// `out_separation` is `mu f - max_k mu_k f` for a separating `f` in
/// `[-1, 1]^n` (0 for members).
///
/// # Safety
/// `mu` must point to `len` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rx_membership(
    model: *const RxModel,
    mu: *const f64,
    len: usize,
    out_member: *mut bool,
    out_separation: *mut f64,
) -> RxStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let pm = m
            .inner
            .as_penalty()
            .ok_or_else(|| Error::Precondition(format!("membership needs a penalty model, got {}", m.inner.kind())))?;
        let mu = scenario(m.inner.space(), slice(mu, len, "mu")?)?;
        let r = scenario_membership(pm, &mu)?;
        *out(out_member, "out_member")? = r.member;
        *out(out_separation, "out_separation")? = r.separation;
        Ok(())
    })
}

/// Runs the continuity-gap construction on `{0,1}` with the Dirac path family
/// at `path` (`full == false`) or the full-simplex family (`full == true`).
///
/// # Safety
/// `path` must point to `path_len` values; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rx_gap_demo(
    path: *const usize,
    path_len: usize,
    depth: usize,
    full: bool,
    out_hat: *mut f64,
    out_bar_limit: *mut f64,
) -> RxStatus {
    guard(|| {
        let y = slice(path, path_len, "path")?.to_vec();
        let base = StateSpace::new(["0", "1"])?;
        let fam = if full {
            MarginalFamily::new(&base, Arc::new(FullSimplexFamily))
        } else {
            MarginalFamily::new(&base, Arc::new(DiracPathFamily::new(y.clone())))
        };
        let demo = hat_vs_bar_gap_demo(&fam, &y, depth)?;
        *out(out_hat, "out_hat")? = demo.hat_value;
        *out(out_bar_limit, "out_bar_limit")? = demo.bar_limit;
        Ok(())
    })
}

/// Robust expectation of a registered function (`one`, `last`,
/// `square_last`, `cos_last`) over a drift/volatility box.
///
/// # Safety
/// `times` must point to `n_times` doubles; `function` must be a
/// NUL-terminated string; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rx_gaussian_robust_eval(
    times: *const f64,
    n_times: usize,
    mu_lo: f64,
    mu_hi: f64,
    sigma_lo: f64,
    sigma_hi: f64,
    function: *const c_char,
    order: usize,
    grid_per_axis: usize,
    refine: bool,
    out_value: *mut f64,
) -> RxStatus {
    guard(|| {
        let grid = TimeGrid::new(slice(times, n_times, "times")?.to_vec())?;
        let pbox = ParamBox::new(mu_lo, mu_hi, sigma_lo, sigma_hi)?;
        let f = GaussianFunction::from_name(text(function, "function")?)?;
        f.check_arity(grid.len())?;
        let r = robust_eval(&grid, &|x: &[f64]| f.eval(x), &pbox, order, grid_per_axis, refine)?;
        *out(out_value, "out_value")? = r.value;
        Ok(())
    })
}

/// Builds a chain from `{"base", "operator", "mu0", "horizon"}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out_chain` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rx_chain_from_json(json: *const c_char, out_chain: *mut *mut RxChain) -> RxStatus {
    guard(|| {
        let slot = out(out_chain, "out_chain")?;
        *slot = std::ptr::null_mut();
        let v = robustexp::document::parse_json(text(json, "json")?)?;
        let doc: ChainDoc = robustexp::document::from_value(v, "chain document")?;
        *slot = Box::into_raw(Box::new(RxChain { inner: doc.build()? }));
        Ok(())
    })
}

/// Releases a chain. Null is ignored.
///
/// # Safety
/// `chain` must come from [`rx_chain_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rx_chain_free(chain: *mut RxChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Number of states per coordinate.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rx_chain_state_count(chain: *const RxChain, out_len: *mut usize) -> RxStatus {
    guard(|| {
        *out(out_len, "out_len")? = handle(chain, "chain")?.inner.operator().domain().len();
        Ok(())
    })
}

/// Last time index of the chain.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rx_chain_horizon(chain: *const RxChain, out_horizon: *mut usize) -> RxStatus {
    guard(|| {
        *out(out_horizon, "out_horizon")? = handle(chain, "chain")?.inner.horizon();
        Ok(())
    })
}

/// `E_J(f)` for the time set `j` (strictly increasing) and `f` tabulated over
/// `S^|J|` with the last coordinate fastest.
///
/// # Safety
/// `j` must point to `j_len` values and `f` to `f_len` doubles; other
/// pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rx_chain_evaluate(
    chain: *const RxChain,
    j: *const u32,
    j_len: usize,
    f: *const f64,
    f_len: usize,
    out_value: *mut f64,
) -> RxStatus {
    guard(|| {
        let c = handle(chain, "chain")?;
        let j = FiniteSubset::new(slice(j, j_len, "j")?.to_vec())?;
        let v = c.inner.evaluate(&j, slice(f, f_len, "f")?)?;
        *out(out_value, "out_value")? = v;
        Ok(())
    })
}
