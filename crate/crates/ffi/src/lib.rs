//! C interface to densebeacon.
//!
//! Every fallible call returns a [`DbStatus`] and writes its result through
//! an out-pointer. On failure the message is kept per thread and can be read
//! with [`db_last_error_message`]. Scenarios and hostile maps are opaque
//! handles owned by the caller and released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, c_double, size_t};

use densebeacon::analysis::{hostile_map, HostileMap};
use densebeacon::beaconsim::{monte_carlo, MonteCarloSummary};
use densebeacon::conditions::{
    channel_condition_probability, collision_persistence_s, collision_recurrence_s, time_condition_probability,
    BeaconConfig, DriftSpan,
};
use densebeacon::config::ScenarioFile;
use densebeacon::layout::ApartmentId;
use densebeacon::propagation::{path_loss_db, RadioConfig};
use densebeacon::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    OutOfDomain = 5,
    Panic = 6,
}

/// A parsed and validated scenario.
pub struct DbScenario {
    inner: ScenarioFile,
}

/// Hostile-AP counts over the STA grid of one apartment.
pub struct DbHostileMap {
    inner: HostileMap,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DbStatus {
    match e {
        Error::DistanceOutOfDomain(_) => DbStatus::OutOfDomain,
        Error::Invalid { .. } | Error::ApartmentOutOfRange { .. } | Error::DegenerateSegment { .. } => {
            DbStatus::InvalidArgument
        }
        Error::Config { .. } | Error::Json(_) => DbStatus::Config,
        Error::Io { .. } => DbStatus::Io,
    }
}

struct Fail(DbStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DbStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DbStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(format!("internal panic: {msg}"));
            DbStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(DbStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn beacons(duration_us: f64, preamble_us: f64, interval_ms: f64) -> Result<BeaconConfig, Fail> {
    let b = BeaconConfig {
        beacon_duration_us: duration_us,
        preamble_us,
        beacon_interval_ms: interval_ms,
        ..BeaconConfig::default()
    };
    b.validate()?;
    Ok(b)
}

fn seconds_or_inf(s: DriftSpan) -> f64 {
    s.seconds().unwrap_or(f64::INFINITY)
}

fn c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(DbStatus::InvalidArgument, "string contains NUL".into()))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn db_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn db_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Path loss in dB. Fails with `OutOfDomain` unless `distance_m > 1`.
///
/// # Safety
/// `out_db` must be NULL or point to writable memory for one double.
#[no_mangle]
pub unsafe extern "C" fn db_path_loss_db(
    distance_m: c_double,
    carrier_ghz: c_double,
    floors: u32,
    walls: u32,
    out_db: *mut c_double,
) -> DbStatus {
    guard(|| {
        let o = out(out_db, "out_db")?;
        if !(carrier_ghz > 0.0) {
            return Err(Fail(DbStatus::InvalidArgument, "carrier_ghz must be positive".into()));
        }
        *o = path_loss_db(distance_m, carrier_ghz, floors, walls)?;
        Ok(())
    })
}

/// Per-interval time-condition probability for one alien beacon.
///
/// # Safety
/// `out_p` must be NULL or point to writable memory for one double.
#[no_mangle]
pub unsafe extern "C" fn db_time_condition_probability(
    beacon_duration_us: c_double,
    preamble_us: c_double,
    beacon_interval_ms: c_double,
    out_p: *mut c_double,
) -> DbStatus {
    guard(|| {
        let o = out(out_p, "out_p")?;
        *o = time_condition_probability(&beacons(beacon_duration_us, preamble_us, beacon_interval_ms)?);
        Ok(())
    })
}

/// Probability that two random primary channels out of `n_channels` match.
///
/// # Safety
/// `out_p` must be NULL or point to writable memory for one double.
#[no_mangle]
pub unsafe extern "C" fn db_channel_condition_probability(n_channels: u32, out_p: *mut c_double) -> DbStatus {
    guard(|| {
        let o = out(out_p, "out_p")?;
        let radio = RadioConfig {
            n_primary_channels: n_channels,
            ..RadioConfig::residential_2g4()
        };
        radio.validate()?;
        *o = channel_condition_probability(&radio);
        Ok(())
    })
}

/// Collision persistence and recurrence in seconds for a relative drift.
/// Both are `+inf` at zero drift.
///
/// # Safety
/// `out_persistence_s` and `out_recurrence_s` must be NULL or point to
/// writable memory for one double each.
#[no_mangle]
pub unsafe extern "C" fn db_drift_spans(
    beacon_duration_us: c_double,
    preamble_us: c_double,
    beacon_interval_ms: c_double,
    relative_drift_ppm: c_double,
    out_persistence_s: *mut c_double,
    out_recurrence_s: *mut c_double,
) -> DbStatus {
    guard(|| {
        let p = out(out_persistence_s, "out_persistence_s")?;
        let r = out(out_recurrence_s, "out_recurrence_s")?;
        if !relative_drift_ppm.is_finite() {
            return Err(Fail(DbStatus::InvalidArgument, "relative drift is not finite".into()));
        }
        let b = beacons(beacon_duration_us, preamble_us, beacon_interval_ms)?;
        *p = seconds_or_inf(collision_persistence_s(&b, relative_drift_ppm));
        *r = seconds_or_inf(collision_recurrence_s(&b, relative_drift_ppm));
        Ok(())
    })
}

/// Loads and validates a scenario file.
///
/// # Safety
/// `path` must be NULL or a NUL-terminated string; `out_scenario` must be
/// NULL or point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn db_scenario_load(path: *const c_char, out_scenario: *mut *mut DbScenario) -> DbStatus {
    guard(|| {
        let o = out(out_scenario, "out_scenario")?;
        let p = str_arg(path, "path")?;
        let inner = ScenarioFile::load(p)?;
        *o = Box::into_raw(Box::new(DbScenario { inner }));
        Ok(())
    })
}

/// Parses and validates a scenario from JSON text.
///
/// # Safety
/// As for [`db_scenario_load`], with `json` in place of `path`.
#[no_mangle]
pub unsafe extern "C" fn db_scenario_parse(json: *const c_char, out_scenario: *mut *mut DbScenario) -> DbStatus {
    guard(|| {
        let o = out(out_scenario, "out_scenario")?;
        let text = str_arg(json, "json")?;
        let inner = ScenarioFile::parse(text, "<memory>")?;
        *o = Box::into_raw(Box::new(DbScenario { inner }));
        Ok(())
    })
}

/// # Safety
/// `scenario` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn db_scenario_free(scenario: *mut DbScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Replaces the scenario's detection margin.
///
/// # Safety
/// `scenario` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn db_scenario_set_delta_p(scenario: *mut DbScenario, delta_p_db: c_double) -> DbStatus {
    guard(|| {
        let s = out(scenario, "scenario")?;
        let mut next = s.inner.clone();
        next.radio.delta_p_db = delta_p_db;
        next.validate()?;
        s.inner = next;
        Ok(())
    })
}

/// Computes the hostile map of apartment (floor, row, column).
///
/// # Safety
/// `scenario` must be NULL or a live handle; `out_map` must be NULL or point
/// to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn db_hostile_map_new(
    scenario: *const DbScenario,
    floor: u32,
    row: u32,
    column: u32,
    out_map: *mut *mut DbHostileMap,
) -> DbStatus {
    guard(|| {
        let o = out(out_map, "out_map")?;
        let s = &scenario.as_ref().ok_or_else(|| null("scenario"))?.inner;
        let inner = hostile_map(
            &s.layout,
            &s.effective_radio(),
            &s.placement.placement(),
            s.placement.mirror_policy,
            ApartmentId::new(floor, row, column),
        )?;
        *o = Box::into_raw(Box::new(DbHostileMap { inner }));
        Ok(())
    })
}

/// # Safety
/// `map` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn db_hostile_map_free(map: *mut DbHostileMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Grid shape as (points across y, points along x).
///
/// # Safety
/// `map` must be NULL or a live handle; the out-pointers must be NULL or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn db_hostile_map_shape(
    map: *const DbHostileMap,
    out_rows: *mut size_t,
    out_cols: *mut size_t,
) -> DbStatus {
    guard(|| {
        let m = &map.as_ref().ok_or_else(|| null("map"))?.inner;
        let r = out(out_rows, "out_rows")?;
        let c = out(out_cols, "out_cols")?;
        (*r, *c) = m.grid_shape;
        Ok(())
    })
}

/// Count at grid point (`iy`, `ix`).
///
/// # Safety
/// `map` must be NULL or a live handle; `out_count` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn db_hostile_map_get(
    map: *const DbHostileMap,
    iy: size_t,
    ix: size_t,
    out_count: *mut u32,
) -> DbStatus {
    guard(|| {
        let m = &map.as_ref().ok_or_else(|| null("map"))?.inner;
        let o = out(out_count, "out_count")?;
        *o = *m
            .values
            .get(iy)
            .and_then(|row| row.get(ix))
            .ok_or_else(|| Fail(DbStatus::InvalidArgument, format!("grid point ({iy}, {ix}) out of range")))?;
        Ok(())
    })
}

/// Maximum count and its first row-major position.
///
/// # Safety
/// `map` must be NULL or a live handle; the out-pointers must be NULL or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn db_hostile_map_max(
    map: *const DbHostileMap,
    out_max: *mut u32,
    out_iy: *mut size_t,
    out_ix: *mut size_t,
) -> DbStatus {
    guard(|| {
        let m = &map.as_ref().ok_or_else(|| null("map"))?.inner;
        let v = out(out_max, "out_max")?;
        let y = out(out_iy, "out_iy")?;
        let x = out(out_ix, "out_ix")?;
        *v = m.max();
        (*y, *x) = m.argmax();
        Ok(())
    })
}

/// Copies the counts row-major into `buf`, which must hold rows × cols values.
///
/// # Safety
/// `map` must be NULL or a live handle; `buf` must be NULL or valid for
/// `len` writes.
#[no_mangle]
pub unsafe extern "C" fn db_hostile_map_copy(map: *const DbHostileMap, buf: *mut u32, len: size_t) -> DbStatus {
    guard(|| {
        let m = &map.as_ref().ok_or_else(|| null("map"))?.inner;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let need = m.grid_shape.0 * m.grid_shape.1;
        if len < need {
            return Err(Fail(DbStatus::InvalidArgument, format!("buffer holds {len}, need {need}")));
        }
        let dst = std::slice::from_raw_parts_mut(buf, need);
        for (d, s) in dst.iter_mut().zip(m.values.iter().flatten()) {
            *d = *s;
        }
        Ok(())
    })
}

/// Runs the scenario's Monte Carlo simulation and returns the summary as a
/// JSON string, freed with [`db_string_free`]. `runs` of 0 keeps the
/// scenario's run count.
///
/// # Safety
/// `scenario` must be NULL or a live handle; `out_json` must be NULL or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn db_simulate_json(
    scenario: *const DbScenario,
    runs: u32,
    seed: u64,
    out_json: *mut *mut c_char,
) -> DbStatus {
    guard(|| {
        let s = &scenario.as_ref().ok_or_else(|| null("scenario"))?.inner;
        let o = out(out_json, "out_json")?;
        let runs = if runs == 0 { s.simulation.runs } else { runs };
        let summary: MonteCarloSummary = monte_carlo(&s.sim_config(), runs, seed)?;
        *o = c_string(serde_json::to_string(&summary).map_err(Error::from)?)?;
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn db_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
