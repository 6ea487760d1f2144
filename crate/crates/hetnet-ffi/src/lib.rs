//! C ABI over the hetnet simulator: opaque handles, integer status codes,
//! UTF-8 strings owned by this library.
//!
//! Conventions:
//! - every function returning [`HetnetStatus`] writes its result through an
//!   out-pointer only on `HETNET_OK`;
//! - handles are created and destroyed by this library; pass each `*_free`
//!   exactly the pointer the corresponding constructor produced;
//! - strings returned as `*mut c_char` are NUL-terminated, owned by the
//!   caller, and must be released with [`hetnet_string_free`];
//! - no call panics across the boundary: internal panics surface as
//!   `HETNET_ERR_INTERNAL`.
//!
//! The matching header lives at `include/hetnet.h` (generated with cbindgen;
//! see `cbindgen.toml`).

use hetnet_core::cli::{parse_config, SimConfig};
use hetnet_core::montecarlo::{self, Aggregate, SweepCurve};
use hetnet_core::scenario::Preset;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status code for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HetnetStatus {
    HetnetOk = 0,
    HetnetErrNullPointer = 1,
    HetnetErrInvalidArgument = 2,
    HetnetErrParse = 3,
    HetnetErrInfeasible = 4,
    HetnetErrInternal = 5,
}

use HetnetStatus::*;

/// Opaque run configuration (scenario, seed, trials, solver settings).
pub struct HetnetConfig {
    inner: SimConfig,
}

/// Opaque batch result of seeded trials.
pub struct HetnetAggregate {
    inner: Aggregate,
}

/// Opaque paired rate-floor sweep result.
pub struct HetnetSweep {
    inner: SweepCurve,
    trials: usize,
}

fn guard<F: FnOnce() -> HetnetStatus>(f: F) -> HetnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => HetnetErrInternal,
    }
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

/// Builds a configuration from a preset name (`"indoor"` or `"outdoor"`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hetnet_config_preset(
    name: *const c_char,
    out: *mut *mut HetnetConfig,
) -> HetnetStatus {
    guard(|| {
        if out.is_null() {
            return HetnetErrNullPointer;
        }
        let Some(name) = cstr(name) else {
            return HetnetErrNullPointer;
        };
        let Some(preset) = Preset::parse(name) else {
            return HetnetErrInvalidArgument;
        };
        let cfg = Box::new(HetnetConfig {
            inner: SimConfig::default_for(preset),
        });
        *out = Box::into_raw(cfg);
        HetnetOk
    })
}

/// Parses config text (same `key = value` format as the CLI).
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hetnet_config_parse(
    text: *const c_char,
    out: *mut *mut HetnetConfig,
) -> HetnetStatus {
    guard(|| {
        if out.is_null() {
            return HetnetErrNullPointer;
        }
        let Some(text) = cstr(text) else {
            return HetnetErrNullPointer;
        };
        match parse_config(text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(HetnetConfig { inner }));
                HetnetOk
            }
            Err(_) => HetnetErrParse,
        }
    })
}

/// Canonical serialization of a configuration. Free with
/// [`hetnet_string_free`].
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn hetnet_config_serialize(cfg: *const HetnetConfig) -> *mut c_char {
    if cfg.is_null() {
        return std::ptr::null_mut();
    }
    let text = (*cfg).inner.serialize();
    CString::new(text).map_or(std::ptr::null_mut(), CString::into_raw)
}

/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn hetnet_config_set_seed(cfg: *mut HetnetConfig, seed: u64) -> HetnetStatus {
    if cfg.is_null() {
        return HetnetErrNullPointer;
    }
    (*cfg).inner.seed = seed;
    HetnetOk
}

/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn hetnet_config_set_trials(
    cfg: *mut HetnetConfig,
    trials: usize,
) -> HetnetStatus {
    if cfg.is_null() {
        return HetnetErrNullPointer;
    }
    if trials == 0 {
        return HetnetErrInvalidArgument;
    }
    (*cfg).inner.trials = trials;
    HetnetOk
}

/// Sets the guaranteed macro sum rate on the shared band, nats/use.
///
/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn hetnet_config_set_min_macro_rate(
    cfg: *mut HetnetConfig,
    nats_per_use: f64,
) -> HetnetStatus {
    if cfg.is_null() {
        return HetnetErrNullPointer;
    }
    if !(nats_per_use >= 0.0 && nats_per_use.is_finite()) {
        return HetnetErrInvalidArgument;
    }
    (*cfg).inner.r_min = nats_per_use;
    HetnetOk
}

/// # Safety
/// `cfg` must come from a `hetnet_config_*` constructor (or be null).
#[no_mangle]
pub unsafe extern "C" fn hetnet_config_free(cfg: *mut HetnetConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the configured number of seeded trials (both bands).
///
/// Fails with `HETNET_ERR_INFEASIBLE` when the macro rate floor is
/// unreachable in every trial.
///
/// # Safety
/// `cfg` must be a live configuration handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hetnet_run_trials(
    cfg: *const HetnetConfig,
    out: *mut *mut HetnetAggregate,
) -> HetnetStatus {
    guard(|| {
        if cfg.is_null() || out.is_null() {
            return HetnetErrNullPointer;
        }
        let sim = &(*cfg).inner;
        let experiment = sim.experiment();
        if experiment.network.validate().is_err() {
            return HetnetErrInvalidArgument;
        }
        let agg = montecarlo::run_trials(&experiment, sim.trials, sim.seed);
        if sim.trials > 0 && agg.infeasible_trials == sim.trials {
            return HetnetErrInfeasible;
        }
        *out = Box::into_raw(Box::new(HetnetAggregate { inner: agg }));
        HetnetOk
    })
}

/// Mean phantom sum rate on a band (1 or 2), nats/use.
///
/// # Safety
/// `agg` must be a live aggregate handle.
#[no_mangle]
pub unsafe extern "C" fn hetnet_aggregate_mean_phantom_rate(
    agg: *const HetnetAggregate,
    band: i32,
) -> f64 {
    if agg.is_null() {
        return f64::NAN;
    }
    match band {
        1 => (*agg).inner.mean_phantom_f1,
        2 => (*agg).inner.mean_phantom_f2,
        _ => f64::NAN,
    }
}

/// 95% confidence half-width companion of the mean phantom rate.
///
/// # Safety
/// `agg` must be a live aggregate handle.
#[no_mangle]
pub unsafe extern "C" fn hetnet_aggregate_ci_phantom_rate(
    agg: *const HetnetAggregate,
    band: i32,
) -> f64 {
    if agg.is_null() {
        return f64::NAN;
    }
    match band {
        1 => (*agg).inner.ci_phantom_f1,
        2 => (*agg).inner.ci_phantom_f2,
        _ => f64::NAN,
    }
}

/// Mean macro sum rate on the shared band, nats/use.
///
/// # Safety
/// `agg` must be a live aggregate handle.
#[no_mangle]
pub unsafe extern "C" fn hetnet_aggregate_mean_macro_rate(agg: *const HetnetAggregate) -> f64 {
    if agg.is_null() {
        return f64::NAN;
    }
    (*agg).inner.mean_macro_f1
}

/// # Safety
/// `agg` must be a live aggregate handle.
#[no_mangle]
pub unsafe extern "C" fn hetnet_aggregate_trials(agg: *const HetnetAggregate) -> usize {
    if agg.is_null() {
        return 0;
    }
    (*agg).inner.trials.len()
}

/// # Safety
/// `agg` must be a live aggregate handle.
#[no_mangle]
pub unsafe extern "C" fn hetnet_aggregate_infeasible_trials(
    agg: *const HetnetAggregate,
) -> usize {
    if agg.is_null() {
        return 0;
    }
    (*agg).inner.infeasible_trials
}

/// # Safety
/// `agg` must be a live aggregate handle.
#[no_mangle]
pub unsafe extern "C" fn hetnet_aggregate_unconverged_trials(
    agg: *const HetnetAggregate,
) -> usize {
    if agg.is_null() {
        return 0;
    }
    (*agg).inner.unconverged_trials
}

/// Per-trial rates, nats/use. Any out-pointer may be null to skip it.
///
/// # Safety
/// `agg` must be a live aggregate handle; non-null out-pointers must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn hetnet_aggregate_trial_rates(
    agg: *const HetnetAggregate,
    trial: usize,
    macro_f1: *mut f64,
    phantom_f1: *mut f64,
    phantom_f2: *mut f64,
) -> HetnetStatus {
    if agg.is_null() {
        return HetnetErrNullPointer;
    }
    let trials = &(*agg).inner.trials;
    let Some(t) = trials.get(trial) else {
        return HetnetErrInvalidArgument;
    };
    if !macro_f1.is_null() {
        *macro_f1 = t.macro_rate_f1();
    }
    if !phantom_f1.is_null() {
        *phantom_f1 = t.phantom_rate_f1();
    }
    if !phantom_f2.is_null() {
        *phantom_f2 = t.phantom_rate_f2();
    }
    HetnetOk
}

/// # Safety
/// `agg` must come from [`hetnet_run_trials`] (or be null).
#[no_mangle]
pub unsafe extern "C" fn hetnet_aggregate_free(agg: *mut HetnetAggregate) {
    if !agg.is_null() {
        drop(Box::from_raw(agg));
    }
}

/// Paired sweep of the macro rate floor using the configuration's sweep
/// section (point count and grid top).
///
/// # Safety
/// `cfg` must be a live configuration handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hetnet_sweep_rmin(
    cfg: *const HetnetConfig,
    out: *mut *mut HetnetSweep,
) -> HetnetStatus {
    guard(|| {
        if cfg.is_null() || out.is_null() {
            return HetnetErrNullPointer;
        }
        let sim = &(*cfg).inner;
        let experiment = sim.experiment();
        if experiment.network.validate().is_err() {
            return HetnetErrInvalidArgument;
        }
        let grid = match sim.sweep_max {
            hetnet_core::cli::SweepMax::Factor(f) => montecarlo::default_rmin_grid(
                &experiment,
                sim.trials,
                sim.seed,
                sim.sweep_points,
                f,
            ),
            hetnet_core::cli::SweepMax::Absolute(top) => (0..sim.sweep_points)
                .map(|i| top * i as f64 / (sim.sweep_points - 1).max(1) as f64)
                .collect(),
        };
        let curve = montecarlo::sweep_rmin(&experiment, &grid, sim.trials, sim.seed);
        *out = Box::into_raw(Box::new(HetnetSweep {
            inner: curve,
            trials: sim.trials,
        }));
        HetnetOk
    })
}

/// # Safety
/// `sweep` must be a live sweep handle.
#[no_mangle]
pub unsafe extern "C" fn hetnet_sweep_len(sweep: *const HetnetSweep) -> usize {
    if sweep.is_null() {
        return 0;
    }
    (*sweep).inner.r_min_grid.len()
}

/// Reads one sweep point. Any out-pointer may be null to skip that field.
/// `infeasible` receives how many of the point's trials failed the
/// feasibility gate.
///
/// # Safety
/// `sweep` must be a live sweep handle; non-null out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hetnet_sweep_point(
    sweep: *const HetnetSweep,
    index: usize,
    r_min: *mut f64,
    mean_phantom_f1: *mut f64,
    mean_phantom_f2: *mut f64,
    mean_phantom_total: *mut f64,
    infeasible: *mut usize,
) -> HetnetStatus {
    if sweep.is_null() {
        return HetnetErrNullPointer;
    }
    let curve = &(*sweep).inner;
    if index >= curve.r_min_grid.len() {
        return HetnetErrInvalidArgument;
    }
    if !r_min.is_null() {
        *r_min = curve.r_min_grid[index];
    }
    if !mean_phantom_f1.is_null() {
        *mean_phantom_f1 = curve.mean_phantom_f1[index];
    }
    if !mean_phantom_f2.is_null() {
        *mean_phantom_f2 = curve.mean_phantom_f2[index];
    }
    if !mean_phantom_total.is_null() {
        *mean_phantom_total = curve.mean_phantom_total[index];
    }
    if !infeasible.is_null() {
        *infeasible = curve.infeasible[index];
    }
    HetnetOk
}

/// Trials per sweep point.
///
/// # Safety
/// `sweep` must be a live sweep handle.
#[no_mangle]
pub unsafe extern "C" fn hetnet_sweep_trials(sweep: *const HetnetSweep) -> usize {
    if sweep.is_null() {
        return 0;
    }
    (*sweep).trials
}

/// # Safety
/// `sweep` must come from [`hetnet_sweep_rmin`] (or be null).
#[no_mangle]
pub unsafe extern "C" fn hetnet_sweep_free(sweep: *mut HetnetSweep) {
    if !sweep.is_null() {
        drop(Box::from_raw(sweep));
    }
}

/// Static message for a status code.
#[no_mangle]
pub extern "C" fn hetnet_status_message(status: HetnetStatus) -> *const c_char {
    let msg: &'static [u8] = match status {
        HetnetOk => b"ok\0",
        HetnetErrNullPointer => b"null pointer argument\0",
        HetnetErrInvalidArgument => b"invalid argument\0",
        HetnetErrParse => b"config parse error\0",
        HetnetErrInfeasible => b"macro rate floor infeasible in every trial\0",
        HetnetErrInternal => b"internal error\0",
    };
    msg.as_ptr() as *const c_char
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn hetnet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from a `hetnet_*` function that documents this free (or be
/// null), and must not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hetnet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
