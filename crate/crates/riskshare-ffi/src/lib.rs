//! C ABI for the `riskshare` library.
//!
//! Conventions:
//! - `RsEnsemble` and `RsMarket` are opaque handles: create them with
//!   `rs_*_parse_json`, destroy them with `rs_*_free`. Handles are immutable
//!   and safe to share across threads.
//! - Every fallible function returns an `RsStatus`; results are written
//!   through `out` pointers only when the status is `Ok`.
//! - On any non-`Ok` status a thread-local message is set; read it with
//!   `rs_last_error_message`. The pointer stays valid until the next call
//!   into this library on the same thread.
//! - All entry points are panic-safe: a Rust panic is caught at the boundary
//!   and reported as `RsStatus::Panic` instead of unwinding into C.

use riskshare::compensators::{
    check_assumption_1, check_assumption_2, cross_integral_2, GammaCompensator, ModelEnsemble,
};
use riskshare::controls::{alpha_star, beta_star, value_function, MarketParams};
use riskshare::error::Error;
use riskshare::moments::{mean_x, mean_y, var_x_qstar, Measure};
use riskshare::pricing::{eta_star_one_model, lambert_w0, optimize_eta};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;

/// Status code returned by every fallible function in this API.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsStatus {
    /// Success; `out` parameters hold the results.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Invalid argument, configuration, or input file content.
    Domain = 3,
    /// A model pair or triple violates the integrability assumptions.
    Infeasible = 4,
    /// A numerical routine failed to converge, or the sample was degenerate.
    Numerical = 5,
    /// An I/O failure.
    Io = 6,
    /// An internal invariant was violated (a bug; please report it).
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("error message unavailable").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_of(err: &Error) -> RsStatus {
    match err {
        Error::Domain(_) | Error::Usage(_) | Error::Schema { .. } | Error::Config(_) => {
            RsStatus::Domain
        }
        Error::InfeasiblePair(_) | Error::InfeasibleTriple(_) | Error::Admissibility(_) => {
            RsStatus::Infeasible
        }
        Error::Numerical { .. } | Error::DegenerateSample(_) => RsStatus::Numerical,
        Error::Io(_) => RsStatus::Io,
    }
}

/// Runs `f` with panics caught; maps `Err` results and panics to a status and
/// stores the message for `rs_last_error_message`.
fn guarded<F>(f: F) -> RsStatus
where
    F: FnOnce() -> Result<(), (RsStatus, String)>,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RsStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(format!("internal panic: {message}"));
            RsStatus::Panic
        }
    }
}

fn lib_err(err: Error) -> (RsStatus, String) {
    (status_of(&err), err.to_string())
}

fn null_arg(name: &str) -> (RsStatus, String) {
    (RsStatus::NullPointer, format!("argument '{name}' is null"))
}

/// # Safety
/// `ptr` must be null or a valid nul-terminated C string.
unsafe fn read_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, (RsStatus, String)> {
    if ptr.is_null() {
        return Err(null_arg(name));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        (
            RsStatus::InvalidUtf8,
            format!("argument '{name}' is not valid UTF-8"),
        )
    })
}

/// # Safety
/// `ptr` must be null or valid for reads of `len` doubles.
unsafe fn read_slice<'a>(
    ptr: *const f64,
    len: usize,
    name: &str,
) -> Result<&'a [f64], (RsStatus, String)> {
    if ptr.is_null() {
        return Err(null_arg(name));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn write_out<T>(out: *mut T, name: &str, value: T) -> Result<(), (RsStatus, String)> {
    if out.is_null() {
        return Err(null_arg(name));
    }
    out.write(value);
    Ok(())
}

/// Opaque handle to an immutable model ensemble (candidates plus counterparty).
pub struct RsEnsemble {
    inner: ModelEnsemble,
}

/// Opaque handle to immutable market parameters.
pub struct RsMarket {
    inner: MarketParams,
}

unsafe fn deref_ensemble<'a>(
    handle: *const RsEnsemble,
) -> Result<&'a ModelEnsemble, (RsStatus, String)> {
    if handle.is_null() {
        return Err(null_arg("ensemble"));
    }
    Ok(&(*handle).inner)
}

unsafe fn deref_market<'a>(
    handle: *const RsMarket,
) -> Result<&'a MarketParams, (RsStatus, String)> {
    if handle.is_null() {
        return Err(null_arg("market"));
    }
    Ok(&(*handle).inner)
}

/// Returns the library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn rs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Returns the message for the most recent failure on this thread, or an
/// empty string when the last call succeeded. The pointer is valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn rs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(msg) => msg.as_ptr(),
        None => c"".as_ptr(),
    })
}

/// Parses an ensemble from its JSON document (fields `models`, `counterparty`,
/// `weights`, `weight_counterparty`). On success writes a handle the caller
/// must release with `rs_ensemble_free`.
///
/// # Safety
/// `json` must be a valid nul-terminated C string; `out` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_ensemble_parse_json(
    json: *const c_char,
    out: *mut *mut RsEnsemble,
) -> RsStatus {
    guarded(|| {
        let text = read_str(json, "json")?;
        let inner = ModelEnsemble::from_json(text).map_err(lib_err)?;
        let handle = Box::into_raw(Box::new(RsEnsemble { inner }));
        write_out(out, "out", handle)
    })
}

/// Releases an ensemble handle. Null is accepted and ignored.
///
/// # Safety
/// `handle` must be null or a pointer produced by `rs_ensemble_parse_json`
/// that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn rs_ensemble_free(handle: *mut RsEnsemble) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Writes the number of candidate models (the counterparty is not counted).
///
/// # Safety
/// `handle` must be a live ensemble handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_ensemble_n_models(
    handle: *const RsEnsemble,
    out: *mut usize,
) -> RsStatus {
    guarded(|| {
        let ens = deref_ensemble(handle)?;
        write_out(out, "out", ens.n_models())
    })
}

/// Writes the state-vector length expected by `rs_alpha_star` and
/// `rs_value_function`: candidates plus the counterparty.
///
/// # Safety
/// `handle` must be a live ensemble handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_ensemble_n_entries(
    handle: *const RsEnsemble,
    out: *mut usize,
) -> RsStatus {
    guarded(|| {
        let ens = deref_ensemble(handle)?;
        write_out(out, "out", ens.n_entries())
    })
}

/// Writes true when every (counterparty, entry) pair and entry pair satisfies
/// the second- and third-order integrability assumptions.
///
/// # Safety
/// `handle` must be a live ensemble handle; `out_feasible` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_ensemble_feasible(
    handle: *const RsEnsemble,
    out_feasible: *mut bool,
) -> RsStatus {
    guarded(|| {
        let ens = deref_ensemble(handle)?;
        let ok = check_assumption_1(ens).all_ok && check_assumption_2(ens).all_ok;
        write_out(out_feasible, "out_feasible", ok)
    })
}

/// Parses market parameters from their JSON document (keys `c`, `eta`,
/// `theta`, `x0`, `y0`, `T`). On success writes a handle the caller must
/// release with `rs_market_free`.
///
/// # Safety
/// `json` must be a valid nul-terminated C string; `out` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_market_parse_json(
    json: *const c_char,
    out: *mut *mut RsMarket,
) -> RsStatus {
    guarded(|| {
        let text = read_str(json, "json")?;
        let inner = MarketParams::from_json(text).map_err(lib_err)?;
        let handle = Box::into_raw(Box::new(RsMarket { inner }));
        write_out(out, "out", handle)
    })
}

/// Releases a market handle. Null is accepted and ignored.
///
/// # Safety
/// `handle` must be null or a pointer produced by `rs_market_parse_json`
/// that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn rs_market_free(handle: *mut RsMarket) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Second-order cross integral of the counterparty density against a model
/// density, for Gamma compensators given as (rate, shape, scale).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_cross_integral_2(
    rate_c: f64,
    shape_c: f64,
    scale_c: f64,
    rate_k: f64,
    shape_k: f64,
    scale_k: f64,
    out: *mut f64,
) -> RsStatus {
    guarded(|| {
        let c = GammaCompensator::new(rate_c, shape_c, scale_c).map_err(lib_err)?;
        let k = GammaCompensator::new(rate_k, shape_k, scale_k).map_err(lib_err)?;
        let value = cross_integral_2(&c, &k).map_err(lib_err)?;
        write_out(out, "out", value)
    })
}

/// Principal branch of the Lambert W function.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_lambert_w0(x: f64, out: *mut f64) -> RsStatus {
    guarded(|| {
        let value = lambert_w0(x).map_err(lib_err)?;
        write_out(out, "out", value)
    })
}

/// Closed-form optimal safety loading when the counterparty model given as
/// (rate, shape, scale) is the only model.
///
/// # Safety
/// `market` must be a live market handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_eta_star_one_model(
    rate: f64,
    shape: f64,
    scale: f64,
    market: *const RsMarket,
    out: *mut f64,
) -> RsStatus {
    guarded(|| {
        let model = GammaCompensator::new(rate, shape, scale).map_err(lib_err)?;
        let mkt = deref_market(market)?;
        let value = eta_star_one_model(&model, mkt).map_err(lib_err)?;
        write_out(out, "out", value)
    })
}

/// Mean of the optimally-shared wealth at time `t` under `measure`
/// ("qstar", "pc", or "pk:IDX" with 1-based IDX).
///
/// # Safety
/// `ensemble` and `market` must be live handles; `measure` must be a valid
/// nul-terminated C string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_mean_x(
    ensemble: *const RsEnsemble,
    market: *const RsMarket,
    measure: *const c_char,
    t: f64,
    out: *mut f64,
) -> RsStatus {
    guarded(|| {
        let ens = deref_ensemble(ensemble)?;
        let mkt = deref_market(market)?;
        let measure = Measure::from_str(read_str(measure, "measure")?).map_err(lib_err)?;
        let value = mean_x(measure, t, ens, mkt).map_err(lib_err)?;
        write_out(out, "out", value)
    })
}

/// Variance of the optimally-shared wealth at time `t` under the optimal
/// measure Q*.
///
/// # Safety
/// `ensemble` and `market` must be live handles; `out` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_var_x_qstar(
    ensemble: *const RsEnsemble,
    market: *const RsMarket,
    t: f64,
    out: *mut f64,
) -> RsStatus {
    guarded(|| {
        let ens = deref_ensemble(ensemble)?;
        let mkt = deref_market(market)?;
        let value = var_x_qstar(t, ens, mkt).map_err(lib_err)?;
        write_out(out, "out", value)
    })
}

/// Counterparty-measure mean of the counterparty's wealth at time `t` when it
/// charges safety loading `eta` (which may differ from the market's).
///
/// # Safety
/// `ensemble` and `market` must be live handles; `out` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_mean_y(
    ensemble: *const RsEnsemble,
    market: *const RsMarket,
    t: f64,
    eta: f64,
    out: *mut f64,
) -> RsStatus {
    guarded(|| {
        let ens = deref_ensemble(ensemble)?;
        let mkt = deref_market(market)?;
        let value = mean_y(t, eta, ens, mkt).map_err(lib_err)?;
        write_out(out, "out", value)
    })
}

/// Optimal ceded amount at time `t` for a claim of size `xi`, given the
/// state vector `z` of length `z_len` (candidates then counterparty;
/// `z_len` must equal the value from `rs_ensemble_n_entries`).
///
/// # Safety
/// `ensemble` and `market` must be live handles; `z` must be valid for reads
/// of `z_len` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_alpha_star(
    ensemble: *const RsEnsemble,
    market: *const RsMarket,
    t: f64,
    xi: f64,
    z: *const f64,
    z_len: usize,
    out: *mut f64,
) -> RsStatus {
    guarded(|| {
        let ens = deref_ensemble(ensemble)?;
        let mkt = deref_market(market)?;
        let z = read_slice(z, z_len, "z")?;
        let value = alpha_star(t, xi, z, ens, mkt).map_err(lib_err)?;
        write_out(out, "out", value)
    })
}

/// Optimal counterparty density distortion at claim size `xi`:
/// (1 + eta) times the counterparty severity-times-rate density.
///
/// # Safety
/// `ensemble` and `market` must be live handles; `out` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_beta_star(
    ensemble: *const RsEnsemble,
    market: *const RsMarket,
    xi: f64,
    out: *mut f64,
) -> RsStatus {
    guarded(|| {
        let ens = deref_ensemble(ensemble)?;
        let mkt = deref_market(market)?;
        let value = beta_star(xi, ens.counterparty(), mkt.eta()).map_err(lib_err)?;
        write_out(out, "out", value)
    })
}

/// Insurer's value function at (t, x, z); `z_len` must equal the value from
/// `rs_ensemble_n_entries`.
///
/// # Safety
/// `ensemble` and `market` must be live handles; `z` must be valid for reads
/// of `z_len` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rs_value_function(
    ensemble: *const RsEnsemble,
    market: *const RsMarket,
    t: f64,
    x: f64,
    z: *const f64,
    z_len: usize,
    out: *mut f64,
) -> RsStatus {
    guarded(|| {
        let ens = deref_ensemble(ensemble)?;
        let mkt = deref_market(market)?;
        let z = read_slice(z, z_len, "z")?;
        let value = value_function(t, x, z, ens, mkt).map_err(lib_err)?;
        write_out(out, "out", value)
    })
}

/// Numerically maximizes the counterparty's expected terminal wealth over the
/// safety loading in (0, `eta_max`]. Writes the optimizer and the achieved
/// expectation.
///
/// # Safety
/// `ensemble` and `market` must be live handles; `out_eta_star` and
/// `out_expected_wealth` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rs_optimize_eta(
    ensemble: *const RsEnsemble,
    market: *const RsMarket,
    eta_max: f64,
    out_eta_star: *mut f64,
    out_expected_wealth: *mut f64,
) -> RsStatus {
    guarded(|| {
        let ens = deref_ensemble(ensemble)?;
        let mkt = deref_market(market)?;
        let result = optimize_eta(ens, mkt, eta_max).map_err(lib_err)?;
        write_out(out_eta_star, "out_eta_star", result.eta_star)?;
        write_out(out_expected_wealth, "out_expected_wealth", result.expected_wealth)
    })
}
