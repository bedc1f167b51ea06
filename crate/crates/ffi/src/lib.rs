//! C ABI over the mobility-report library.
//!
//! Every fallible function returns an [`MrStatus`] and writes its result
//! through an out-pointer. On failure a description is available from
//! [`mr_last_error`] on the same thread. Handles are opaque and must be
//! released with their matching `*_free` function; strings returned by the
//! library are released with [`mr_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mobility_report::model::{parse_trips, ParseOptions};
use mobility_report::tessellation::load_tessellation;
use mobility_report::{generate_report, render_html, serialize_json, Dataset, Error, Report, ReportConfig, Tessellation};

/// Result codes shared by all fallible functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Bad configuration: flags, budget, bins, unbounded sensitivity.
    ConfigError = 3,
    /// Unusable input data.
    DataError = 4,
    IoError = 5,
    /// A Rust panic was caught at the boundary.
    InternalError = 6,
}

/// Parsed trips.
pub struct MrDataset(Dataset);

/// Loaded tiles.
pub struct MrTessellation(Tessellation);

/// A finished report.
pub struct MrReport(Report);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: MrStatus, msg: impl Into<String>) -> MrStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> MrStatus {
    match e {
        Error::Io(_) => MrStatus::IoError,
        e if e.is_config() => MrStatus::ConfigError,
        _ => MrStatus::DataError,
    }
}

fn guard(f: impl FnOnce() -> MrStatus) -> MrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(MrStatus::InternalError, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, MrStatus> {
    if p.is_null() {
        return Err(fail(MrStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(MrStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

fn open(path: &str) -> Result<BufReader<File>, MrStatus> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| fail(MrStatus::IoError, format!("{path}: {e}")))
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! try_lib {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(err) => return fail(status_of(&err), err.to_string()),
        }
    };
}

/// Message for the last failure on this thread, or null. The pointer is
/// valid until the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn mr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn mr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Reads a trip CSV with the default column names and a comma delimiter.
/// Invalid rows are skipped; `skipped` (may be null) receives their count.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mr_dataset_load_csv(
    path: *const c_char,
    skipped: *mut usize,
    out: *mut *mut MrDataset,
) -> MrStatus {
    guard(|| {
        if out.is_null() {
            return fail(MrStatus::NullArgument, "`out` is null");
        }
        let path = try_status!(str_arg(path, "path"));
        let reader = try_status!(open(path));
        let parsed = try_lib!(parse_trips(reader, &ParseOptions::default()));
        if !skipped.is_null() {
            *skipped = parsed.rejections.len();
        }
        put(out, MrDataset(parsed.dataset));
        MrStatus::Ok
    })
}

/// Same as [`mr_dataset_load_csv`] for CSV text held in memory.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn mr_dataset_from_csv_bytes(
    data: *const u8,
    len: usize,
    skipped: *mut usize,
    out: *mut *mut MrDataset,
) -> MrStatus {
    guard(|| {
        if out.is_null() || (data.is_null() && len > 0) {
            return fail(MrStatus::NullArgument, "`data` or `out` is null");
        }
        let bytes = if len == 0 { &[][..] } else { std::slice::from_raw_parts(data, len) };
        let parsed = try_lib!(parse_trips(bytes, &ParseOptions::default()));
        if !skipped.is_null() {
            *skipped = parsed.rejections.len();
        }
        put(out, MrDataset(parsed.dataset));
        MrStatus::Ok
    })
}

/// Number of trips, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn mr_dataset_trip_count(ds: *const MrDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Number of distinct users, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn mr_dataset_user_count(ds: *const MrDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.user_count())
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mr_dataset_free(ds: *mut MrDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Reads a GeoJSON FeatureCollection of tiles. Invalid features are
/// skipped; `skipped` (may be null) receives their count.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mr_tessellation_load_geojson(
    path: *const c_char,
    skipped: *mut usize,
    out: *mut *mut MrTessellation,
) -> MrStatus {
    guard(|| {
        if out.is_null() {
            return fail(MrStatus::NullArgument, "`out` is null");
        }
        let path = try_status!(str_arg(path, "path"));
        let reader = try_status!(open(path));
        let loaded = try_lib!(load_tessellation(reader));
        if !skipped.is_null() {
            *skipped = loaded.rejections.len();
        }
        put(out, MrTessellation(loaded.tessellation));
        MrStatus::Ok
    })
}

/// Same as [`mr_tessellation_load_geojson`] for a GeoJSON string.
///
/// # Safety
/// `geojson` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mr_tessellation_from_geojson(
    geojson: *const c_char,
    skipped: *mut usize,
    out: *mut *mut MrTessellation,
) -> MrStatus {
    guard(|| {
        if out.is_null() {
            return fail(MrStatus::NullArgument, "`out` is null");
        }
        let text = try_status!(str_arg(geojson, "geojson"));
        let loaded = try_lib!(load_tessellation(text.as_bytes()));
        if !skipped.is_null() {
            *skipped = loaded.rejections.len();
        }
        put(out, MrTessellation(loaded.tessellation));
        MrStatus::Ok
    })
}

/// Number of tiles, or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live tessellation handle.
#[no_mangle]
pub unsafe extern "C" fn mr_tessellation_tile_count(t: *const MrTessellation) -> usize {
    t.as_ref().map_or(0, |t| t.0.len())
}

/// # Safety
/// `t` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mr_tessellation_free(t: *mut MrTessellation) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Builds a report. `config_json` holds the report configuration object
/// (`epsilon`, `privacy_mode`, `max_trips_per_user`, `seed`, `measures`,
/// ...); null means all defaults.
///
/// # Safety
/// `ds` and `tess` must be live handles, `config_json` null or a
/// NUL-terminated string, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mr_report_generate(
    ds: *const MrDataset,
    tess: *const MrTessellation,
    config_json: *const c_char,
    out: *mut *mut MrReport,
) -> MrStatus {
    guard(|| {
        let (Some(ds), Some(tess)) = (ds.as_ref(), tess.as_ref()) else {
            return fail(MrStatus::NullArgument, "dataset or tessellation handle is null");
        };
        if out.is_null() {
            return fail(MrStatus::NullArgument, "`out` is null");
        }
        let config: ReportConfig = if config_json.is_null() {
            ReportConfig::default()
        } else {
            let text = try_status!(str_arg(config_json, "config_json"));
            match serde_json::from_str(text) {
                Ok(c) => c,
                Err(e) => return fail(MrStatus::ConfigError, format!("config: {e}")),
            }
        };
        let report = try_lib!(generate_report(&ds.0, &tess.0, &config));
        put(out, MrReport(report));
        MrStatus::Ok
    })
}

unsafe fn bytes_out(bytes: Vec<u8>, out: *mut *mut c_char) -> MrStatus {
    match CString::new(bytes) {
        Ok(c) => {
            *out = c.into_raw();
            MrStatus::Ok
        }
        Err(_) => fail(MrStatus::InternalError, "output contains a NUL byte"),
    }
}

/// Canonical JSON of the report. Free the result with [`mr_string_free`].
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mr_report_to_json(report: *const MrReport, out: *mut *mut c_char) -> MrStatus {
    guard(|| match (report.as_ref(), out.is_null()) {
        (Some(r), false) => bytes_out(serialize_json(&r.0), out),
        _ => fail(MrStatus::NullArgument, "`report` or `out` is null"),
    })
}

/// Self-contained HTML page. Free the result with [`mr_string_free`].
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mr_report_to_html(report: *const MrReport, out: *mut *mut c_char) -> MrStatus {
    guard(|| match (report.as_ref(), out.is_null()) {
        (Some(r), false) => bytes_out(render_html(&r.0), out),
        _ => fail(MrStatus::NullArgument, "`report` or `out` is null"),
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mr_report_free(report: *mut MrReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Great-circle distance in meters between two points in degrees.
#[no_mangle]
pub extern "C" fn mr_haversine_distance(lat1: f64, lng1: f64, lat2: f64, lng2: f64) -> f64 {
    mobility_report::haversine_distance((lat1, lng1), (lat2, lng2))
}
