//! C ABI over the simulator: opaque configuration and result handles,
//! integer status codes, and a per-thread last-error message.
//!
//! Every function returning `RecsimStatus` writes its outputs only on
//! `RECSIM_STATUS_OK`. Handles are released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::time::{Duration, Instant};

use recsim_core::experiment::run_experiment;
use recsim_core::io::write_outputs;
use recsim_core::{AlgorithmKind, Error, ExperimentConfig, MetricsReport, RunResults};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    InvalidArgument = 4,
    SimulationFailed = 5,
    Io = 6,
    OutputExists = 7,
    OutOfRange = 8,
    Panic = 9,
}

/// Opaque experiment configuration.
pub struct RecsimConfig {
    inner: ExperimentConfig,
}

/// Opaque results of a finished experiment.
pub struct RecsimResults {
    inner: RunResults,
    elapsed: Duration,
}

/// Per-run metrics. Undefined ratios are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RecsimMetrics {
    /// Position of the algorithm in `recsim_algorithm_name` order.
    pub algorithm: u32,
    pub run_id: u64,
    pub inter: f64,
    pub intra: f64,
    pub filter_bubble: f64,
    pub homogeneity: f64,
    pub alt_homogeneity: f64,
    pub natural_homogeneity: f64,
    pub mean_q: f64,
    pub mean_aff: f64,
    pub std_q: f64,
    pub std_aff: f64,
}

impl From<&MetricsReport> for RecsimMetrics {
    fn from(r: &MetricsReport) -> Self {
        let index = AlgorithmKind::ALL.iter().position(|&k| k == r.algorithm).unwrap_or(0);
        RecsimMetrics {
            algorithm: index as u32,
            run_id: r.run_id as u64,
            inter: r.inter,
            intra: r.intra,
            filter_bubble: r.filter_bubble.unwrap_or(f64::NAN),
            homogeneity: r.homogeneity.unwrap_or(f64::NAN),
            alt_homogeneity: r.alt_homogeneity.unwrap_or(f64::NAN),
            natural_homogeneity: r.natural_homogeneity.unwrap_or(f64::NAN),
            mean_q: r.mean_q,
            mean_aff: r.mean_aff,
            std_q: r.std_q,
            std_aff: r.std_aff,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: RecsimStatus, message: impl Into<String>) -> RecsimStatus {
    set_error(message.into());
    status
}

fn status_of(err: &Error) -> RecsimStatus {
    match err {
        Error::Config { .. } | Error::ConfigParse { .. } => RecsimStatus::InvalidConfig,
        Error::Usage(_) => RecsimStatus::InvalidArgument,
        Error::Io { .. } | Error::Csv { .. } | Error::Json { .. } => RecsimStatus::Io,
        Error::OutputExists(_) => RecsimStatus::OutputExists,
        _ => RecsimStatus::SimulationFailed,
    }
}

fn guard(body: impl FnOnce() -> Result<(), RecsimStatus>) -> RecsimStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => RecsimStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(RecsimStatus::Panic, "panic inside recsim"),
    }
}

fn check<T>(result: recsim_core::Result<T>) -> Result<T, RecsimStatus> {
    result.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, RecsimStatus> {
    if s.is_null() {
        return Err(fail(RecsimStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(RecsimStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, RecsimStatus> {
    p.as_mut().ok_or_else(|| fail(RecsimStatus::NullPointer, format!("{what} is null")))
}

/// Message of the last failure on this thread, or null. Valid until the next call that fails.
#[no_mangle]
pub extern "C" fn recsim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static, NUL-terminated library version.
#[no_mangle]
pub extern "C" fn recsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn recsim_algorithm_count() -> usize {
    AlgorithmKind::ALL.len()
}

/// Static name of algorithm `index`, or null when out of range.
#[no_mangle]
pub extern "C" fn recsim_algorithm_name(index: usize) -> *const c_char {
    const NAMES: [&str; 9] = [
        "none\0",
        "true-genre\0",
        "true-quality\0",
        "perfect\0",
        "consumption\0",
        "svd\0",
        "hybrid\0",
        "binned-consumption\0",
        "skewed-top-pick\0",
    ];
    NAMES.get(index).map_or(ptr::null(), |n| n.as_ptr().cast())
}

fn boxed_config(out: *mut *mut RecsimConfig, inner: ExperimentConfig) -> Result<(), RecsimStatus> {
    let slot = unsafe { out_ptr(out, "out")? };
    *slot = Box::into_raw(Box::new(RecsimConfig { inner }));
    Ok(())
}

/// Full-scale default configuration.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn recsim_config_default(out: *mut *mut RecsimConfig) -> RecsimStatus {
    guard(|| boxed_config(out, ExperimentConfig::default()))
}

/// Small desk-scale configuration.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn recsim_config_desk(out: *mut *mut RecsimConfig) -> RecsimStatus {
    guard(|| boxed_config(out, ExperimentConfig::desk()))
}

/// Parses a TOML document; missing keys take the defaults.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn recsim_config_from_toml(toml: *const c_char, out: *mut *mut RecsimConfig) -> RecsimStatus {
    guard(|| {
        let source = text(toml, "toml")?;
        let config = check(ExperimentConfig::from_toml_str(source))?;
        boxed_config(out, config)
    })
}

/// Overrides the number of seeds per algorithm.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn recsim_config_set_runs(config: *mut RecsimConfig, runs: usize) -> RecsimStatus {
    guard(|| {
        let config = out_ptr(config, "config")?;
        let mut candidate = config.inner.clone();
        candidate.n_runs = runs;
        check(candidate.validate())?;
        config.inner = candidate;
        Ok(())
    })
}

/// Overrides the master seed.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn recsim_config_set_seed(config: *mut RecsimConfig, seed: u64) -> RecsimStatus {
    guard(|| {
        let config = out_ptr(config, "config")?;
        let mut candidate = config.inner.clone();
        candidate.master_seed = seed;
        check(candidate.validate())?;
        config.inner = candidate;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn recsim_config_free(config: *mut RecsimConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs every algorithm in the comma-separated `algorithms` list
/// (null or "all" selects all nine) over the configured seeds.
///
/// # Safety
/// `config` must be a live handle, `algorithms` null or NUL-terminated,
/// and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn recsim_run(
    config: *const RecsimConfig,
    algorithms: *const c_char,
    out: *mut *mut RecsimResults,
) -> RecsimStatus {
    guard(|| {
        let config = config
            .as_ref()
            .ok_or_else(|| fail(RecsimStatus::NullPointer, "config is null"))?;
        let slot = out_ptr(out, "out")?;
        let kinds = if algorithms.is_null() {
            AlgorithmKind::ALL.to_vec()
        } else {
            match text(algorithms, "algorithms")? {
                "all" => AlgorithmKind::ALL.to_vec(),
                list => check(AlgorithmKind::parse_list(list))?,
            }
        };
        let started = Instant::now();
        let inner = check(run_experiment(&config.inner, &kinds))?;
        let elapsed = started.elapsed();
        *slot = Box::into_raw(Box::new(RecsimResults { inner, elapsed }));
        Ok(())
    })
}

/// Number of (algorithm, seed) runs held.
///
/// # Safety
/// `results` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn recsim_results_len(results: *const RecsimResults) -> usize {
    results.as_ref().map_or(0, |r| r.inner.records.len())
}

/// Metrics of run `index`, ordered by algorithm then seed.
///
/// # Safety
/// `results` must be a live handle and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn recsim_results_metrics(
    results: *const RecsimResults,
    index: usize,
    out: *mut RecsimMetrics,
) -> RecsimStatus {
    guard(|| {
        let results = results
            .as_ref()
            .ok_or_else(|| fail(RecsimStatus::NullPointer, "results is null"))?;
        let slot = out_ptr(out, "out")?;
        let record = results.inner.records.get(index).ok_or_else(|| {
            fail(
                RecsimStatus::OutOfRange,
                format!("run {index} of {}", results.inner.records.len()),
            )
        })?;
        *slot = RecsimMetrics::from(&record.report);
        Ok(())
    })
}

/// Writes logs, metrics and the manifest under `out_dir`.
///
/// # Safety
/// `results` must be a live handle and `out_dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn recsim_results_write(
    results: *const RecsimResults,
    out_dir: *const c_char,
    force: bool,
) -> RecsimStatus {
    guard(|| {
        let results = results
            .as_ref()
            .ok_or_else(|| fail(RecsimStatus::NullPointer, "results is null"))?;
        let dir = text(out_dir, "out_dir")?;
        check(write_outputs(&results.inner, Path::new(dir), force, results.elapsed))?;
        Ok(())
    })
}

/// # Safety
/// `results` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn recsim_results_free(results: *mut RecsimResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}
