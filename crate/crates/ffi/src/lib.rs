//! C ABI for the bikenet solver.
//!
//! Handles are opaque: create them with the `*_new`/`bikenet_solve_*`
//! functions, release them with the matching `*_free`. Every fallible call
//! returns a [`BikenetStatus`]; on failure the message is kept per thread and
//! can be fetched with [`bikenet_last_error_message`]. Station indices are
//! zero-based.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use bikenet::desim::{self, SimConfig, SimTarget};
use bikenet::linalg::SolverOptions;
use bikenet::productform::{self, Convention};
use bikenet::traffic::{self, FixedPointOptions};
use bikenet::{ctmc, metrics, Error, NetworkParams, StateSpace, StationaryDistribution};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BikenetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ConfigError = 3,
    InvalidParams = 4,
    ResourceLimit = 5,
    NonConvergence = 6,
    NumericalError = 7,
    IoError = 8,
    IndexError = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BikenetConvention {
    Literal = 0,
    Standard = 1,
}

impl From<BikenetConvention> for Convention {
    fn from(c: BikenetConvention) -> Self {
        match c {
            BikenetConvention::Literal => Convention::Literal,
            BikenetConvention::Standard => Convention::Standard,
        }
    }
}

/// A validated model with its enumerated state space.
pub struct BikenetModel {
    params: NetworkParams,
    space: StateSpace,
}

/// A probability vector over a model's state space.
pub struct BikenetDistribution {
    dist: StationaryDistribution,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> BikenetStatus {
    match err {
        Error::Config(_) => BikenetStatus::ConfigError,
        Error::InvalidParams(_) => BikenetStatus::InvalidParams,
        Error::ResourceLimit { .. } => BikenetStatus::ResourceLimit,
        Error::NonConvergence { .. } => BikenetStatus::NonConvergence,
        Error::Io(_) => BikenetStatus::IoError,
        Error::NotAMember(_) | Error::OutOfRange { .. } | Error::StationIndex { .. } | Error::MismatchedSpace(_) => {
            BikenetStatus::IndexError
        }
        _ => BikenetStatus::NumericalError,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard<F>(f: F) -> BikenetStatus
where
    F: FnOnce() -> Result<(), (BikenetStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            BikenetStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside bikenet".into());
            BikenetStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (BikenetStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (BikenetStatus, String) {
    (BikenetStatus::NullPointer, format!("{what} is null"))
}

unsafe fn model_ref<'a>(m: *const BikenetModel) -> Result<&'a BikenetModel, (BikenetStatus, String)> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn dist_ref<'a>(d: *const BikenetDistribution) -> Result<&'a BikenetDistribution, (BikenetStatus, String)> {
    d.as_ref().ok_or_else(|| null("distribution"))
}

fn boxed_dist(dist: StationaryDistribution, out: *mut *mut BikenetDistribution) {
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(Box::new(BikenetDistribution { dist })) };
}

/// Parses a TOML config, validates it and enumerates its state space.
///
/// # Safety
/// `config` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bikenet_model_from_toml(config: *const c_char, out: *mut *mut BikenetModel) -> BikenetStatus {
    guard(|| {
        if config.is_null() {
            return Err(null("config"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(config).to_str().map_err(|e| (BikenetStatus::InvalidUtf8, e.to_string()))?;
        let params = NetworkParams::from_toml_str(text).map_err(lib_err)?;
        params.checked().map_err(lib_err)?;
        let space = StateSpace::enumerate(&params).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(BikenetModel { params, space }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`bikenet_model_from_toml`] or be null.
#[no_mangle]
pub unsafe extern "C" fn bikenet_model_free(model: *mut BikenetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of states and length of each state vector.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bikenet_model_shape(
    model: *const BikenetModel,
    states: *mut usize,
    dim: *mut usize,
    stations: *mut usize,
) -> BikenetStatus {
    guard(|| {
        let m = model_ref(model)?;
        if states.is_null() || dim.is_null() || stations.is_null() {
            return Err(null("output"));
        }
        *states = m.space.len();
        *dim = m.space.dim();
        *stations = m.params.stations;
        Ok(())
    })
}

/// Writes 1 to `full_reachable` when some station can become full (`NC >= K`).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bikenet_model_regime(model: *const BikenetModel, full_reachable: *mut i32) -> BikenetStatus {
    guard(|| {
        let m = model_ref(model)?;
        if full_reachable.is_null() {
            return Err(null("full_reachable"));
        }
        *full_reachable = (m.params.regime() == bikenet::Regime::FullReachable) as i32;
        Ok(())
    })
}

/// Copies the component vector of state `rank` into `buf` (length `len >= dim`).
///
/// # Safety
/// `buf` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn bikenet_model_state(
    model: *const BikenetModel,
    rank: usize,
    buf: *mut u32,
    len: usize,
) -> BikenetStatus {
    guard(|| {
        let m = model_ref(model)?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let state = m.space.unrank(rank).map_err(lib_err)?.components();
        if len < state.len() {
            return Err((BikenetStatus::BufferTooSmall, format!("need {} entries", state.len())));
        }
        slice::from_raw_parts_mut(buf, state.len()).copy_from_slice(&state);
        Ok(())
    })
}

/// Rank of a component vector.
///
/// # Safety
/// `comps` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn bikenet_model_rank(
    model: *const BikenetModel,
    comps: *const u32,
    len: usize,
    out: *mut usize,
) -> BikenetStatus {
    guard(|| {
        let m = model_ref(model)?;
        if comps.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        *out = m.space.rank_components(slice::from_raw_parts(comps, len)).map_err(lib_err)?;
        Ok(())
    })
}

/// Exact stationary distribution from the CTMC.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bikenet_solve_ctmc(
    model: *const BikenetModel,
    out: *mut *mut BikenetDistribution,
) -> BikenetStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = ctmc::solve(&m.space, &m.params, &SolverOptions::default()).map_err(lib_err)?;
        boxed_dist(d, out);
        Ok(())
    })
}

/// Product form with fixed redirect probabilities `beta` (one per station).
/// A null `beta` means all zeros.
///
/// # Safety
/// `beta` must hold `beta_len` elements when non-null; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bikenet_solve_product_form(
    model: *const BikenetModel,
    convention: BikenetConvention,
    beta: *const f64,
    beta_len: usize,
    out: *mut *mut BikenetDistribution,
) -> BikenetStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let beta =
            if beta.is_null() { vec![0.0; m.params.stations] } else { slice::from_raw_parts(beta, beta_len).to_vec() };
        let ratios = traffic::solve_node_level(&m.params, &beta).map_err(lib_err)?;
        let (_, d) = productform::normalize_direct(&m.space, &ratios, &m.params, convention.into()).map_err(lib_err)?;
        boxed_dist(d, out);
        Ok(())
    })
}

/// Product form with self-consistent redirect probabilities. `converged`
/// receives 1 on convergence, 0 otherwise (the result is still returned).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bikenet_solve_product_form_fixed_point(
    model: *const BikenetModel,
    convention: BikenetConvention,
    converged: *mut i32,
    out: *mut *mut BikenetDistribution,
) -> BikenetStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() || converged.is_null() {
            return Err(null("output"));
        }
        let conv = Convention::from(convention);
        let eval = productform::full_probability_evaluator(&m.space, &m.params, conv);
        let fp = traffic::fixed_point_beta(&m.params, eval, &FixedPointOptions::default()).map_err(lib_err)?;
        let (_, d) = productform::normalize_direct(&m.space, &fp.ratios, &m.params, conv).map_err(lib_err)?;
        *converged = fp.converged as i32;
        boxed_dist(d, out);
        Ok(())
    })
}

/// Simulated occupancy distribution (mean over replications).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bikenet_simulate(
    model: *const BikenetModel,
    horizon: f64,
    warmup: f64,
    replications: usize,
    seed: u64,
    out: *mut *mut BikenetDistribution,
) -> BikenetStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = SimConfig {
            horizon,
            warmup,
            replications,
            base_seed: seed,
            targets: vec![SimTarget::StateProbabilities],
            trace_events: 0,
        };
        let sim = desim::simulate(&m.params, &m.space, &cfg).map_err(lib_err)?;
        boxed_dist(sim.distribution, out);
        Ok(())
    })
}

/// # Safety
/// `dist` must come from a `bikenet_solve_*` call or be null.
#[no_mangle]
pub unsafe extern "C" fn bikenet_distribution_free(dist: *mut BikenetDistribution) {
    if !dist.is_null() {
        drop(Box::from_raw(dist));
    }
}

/// Copies the probabilities (rank order) into `buf`, which must hold at
/// least the state count.
///
/// # Safety
/// `buf` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn bikenet_distribution_probabilities(
    dist: *const BikenetDistribution,
    buf: *mut f64,
    len: usize,
) -> BikenetStatus {
    guard(|| {
        let d = dist_ref(dist)?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < d.dist.probs.len() {
            return Err((BikenetStatus::BufferTooSmall, format!("need {} entries", d.dist.probs.len())));
        }
        slice::from_raw_parts_mut(buf, d.dist.probs.len()).copy_from_slice(&d.dist.probs);
        Ok(())
    })
}

/// Empty, full and problematic probability of one station.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bikenet_problematic(
    model: *const BikenetModel,
    dist: *const BikenetDistribution,
    station: usize,
    empty: *mut f64,
    full: *mut f64,
    problematic: *mut f64,
) -> BikenetStatus {
    guard(|| {
        let m = model_ref(model)?;
        let d = dist_ref(dist)?;
        if empty.is_null() || full.is_null() || problematic.is_null() {
            return Err(null("output"));
        }
        let p = metrics::problematic(&d.dist, &m.space, station).map_err(lib_err)?;
        *empty = p.empty;
        *full = p.full;
        *problematic = p.problematic;
        Ok(())
    })
}

/// Mean occupancy per station into `stations_buf` (length `len >= N`), and
/// mean bikes on roads into `q0`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bikenet_mean_queues(
    model: *const BikenetModel,
    dist: *const BikenetDistribution,
    stations_buf: *mut f64,
    len: usize,
    q0: *mut f64,
) -> BikenetStatus {
    guard(|| {
        let m = model_ref(model)?;
        let d = dist_ref(dist)?;
        if stations_buf.is_null() || q0.is_null() {
            return Err(null("output"));
        }
        let q = metrics::mean_queues(&d.dist, &m.space).map_err(lib_err)?;
        if len < q.stations.len() {
            return Err((BikenetStatus::BufferTooSmall, format!("need {} entries", q.stations.len())));
        }
        slice::from_raw_parts_mut(stations_buf, q.stations.len()).copy_from_slice(&q.stations);
        *q0 = q.q0_direct;
        Ok(())
    })
}

/// Total-variation distance between two distributions over the same space.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bikenet_total_variation(
    a: *const BikenetDistribution,
    b: *const BikenetDistribution,
    out: *mut f64,
) -> BikenetStatus {
    guard(|| {
        let a = dist_ref(a)?;
        let b = dist_ref(b)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let block = metrics::compare(&[&a.dist, &b.dist]).map_err(lib_err)?;
        *out = block.pairs[0].total_variation;
        Ok(())
    })
}

/// Copies the calling thread's last error message (NUL-terminated,
/// truncated to fit) into `buf` and returns the full message length in
/// bytes, excluding the terminator. Pass a null `buf` to query the length.
///
/// # Safety
/// `buf` must hold `len` bytes when non-null.
#[no_mangle]
pub unsafe extern "C" fn bikenet_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bikenet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
