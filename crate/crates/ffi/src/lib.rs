//! C ABI over the simulator.
//!
//! Configurations and runs are opaque handles owned by the caller and
//! released with [`vt_config_free`] / [`vt_run_free`]. Every fallible call
//! returns a [`VtStatus`]; on failure, [`vt_last_error`] describes the cause
//! for the calling thread. Undefined rates are reported as NaN.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vanet_trust::config::load_config;
use vanet_trust::oracle::oracle_replay;
use vanet_trust::output::write_run_dir;
use vanet_trust::runlog::RunLog;
use vanet_trust::{run, ConfigError, Policy, RunResult, ScenarioConfig, SimError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    Simulation = 4,
    Io = 5,
    OutOfRange = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VtPolicy {
    Tcemd = 0,
    Safe = 1,
}

impl From<VtPolicy> for Policy {
    fn from(p: VtPolicy) -> Self {
        match p {
            VtPolicy::Tcemd => Policy::Tcemd,
            VtPolicy::Safe => Policy::Safe,
        }
    }
}

/// Opaque scenario configuration.
pub struct VtConfig(ScenarioConfig);

/// Opaque completed run: its log and derived results.
pub struct VtRun {
    log: RunLog,
    result: RunResult,
}

/// Metrics of one global-trust period.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VtPeriod {
    pub period_index: u32,
    pub t: f64,
    pub fbr_count: u64,
    pub positive_rate: f64,
    pub negative_rate: f64,
    pub ugt_count: u64,
    pub blr: f64,
    pub n_blr: f64,
    pub decision_accuracy: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VtTotals {
    pub vehicles: u64,
    pub messages: u64,
    pub deliveries: u64,
    pub decisions: u64,
    pub reports: u64,
    pub reports_accepted: u64,
    pub reports_rejected: u64,
    pub blacklisted: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Fail(VtStatus, String);

impl From<ConfigError> for Fail {
    fn from(e: ConfigError) -> Self {
        Fail(VtStatus::InvalidConfig, e.to_string())
    }
}

impl From<SimError> for Fail {
    fn from(e: SimError) -> Self {
        let status = match e {
            SimError::Config(_) | SimError::Sweep(_) => VtStatus::InvalidConfig,
            SimError::Io(_) | SimError::Csv(_) => VtStatus::Io,
            _ => VtStatus::Simulation,
        };
        Fail(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            VtStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            VtStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(VtStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(VtStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(VtStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(VtStatus::NullPointer, "output pointer is null".into()))
}

fn rate(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

/// Message for the last failed call on this thread, or NULL after a success.
/// Valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn vt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static, NUL-terminated library version.
#[no_mangle]
pub extern "C" fn vt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a configuration from a preset name (`single_event`, `multi_event`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out_config` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vt_config_preset(name: *const c_char, out_config: *mut *mut VtConfig) -> VtStatus {
    guard(|| {
        let slot = out(out_config)?;
        let cfg = ScenarioConfig::preset(text(name, "name")?)?;
        *slot = Box::into_raw(Box::new(VtConfig(cfg)));
        Ok(())
    })
}

/// Parses and validates a TOML scenario document.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out_config` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vt_config_from_toml(toml: *const c_char, out_config: *mut *mut VtConfig) -> VtStatus {
    guard(|| {
        let slot = out(out_config)?;
        let cfg = load_config(text(toml, "toml")?)?;
        *slot = Box::into_raw(Box::new(VtConfig(cfg)));
        Ok(())
    })
}

/// Sets one parameter from a TOML literal, e.g. `("d_d", "200")`. Event keys
/// apply to every event. The configuration is unchanged on failure.
///
/// # Safety
/// `config` must come from this library; `key` and `value` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn vt_config_set(config: *mut VtConfig, key: *const c_char, value: *const c_char) -> VtStatus {
    guard(|| {
        let cfg = out(config)?;
        cfg.0 = cfg.0.with_override(text(key, "key")?, text(value, "value")?)?;
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn vt_config_set_policy(config: *mut VtConfig, policy: VtPolicy) -> VtStatus {
    guard(|| {
        out(config)?.0.policy = policy.into();
        Ok(())
    })
}

/// Resolved configuration as a TOML string; release it with [`vt_string_free`].
///
/// # Safety
/// `config` must come from this library; `out_toml` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vt_config_to_toml(config: *const VtConfig, out_toml: *mut *mut c_char) -> VtStatus {
    guard(|| {
        let slot = out(out_toml)?;
        let s = handle(config, "config")?.0.to_toml();
        *slot = CString::new(s).map_err(|e| Fail(VtStatus::Simulation, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `config` must be NULL or come from this library, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn vt_config_free(config: *mut VtConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn vt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Runs the simulation to completion.
///
/// # Safety
/// `config` must come from this library; `out_run` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vt_run(config: *const VtConfig, seed: u64, out_run: *mut *mut VtRun) -> VtStatus {
    guard(|| {
        let slot = out(out_run)?;
        let (log, result) = run(&handle(config, "config")?.0, seed)?;
        *slot = Box::into_raw(Box::new(VtRun { log, result }));
        Ok(())
    })
}

/// # Safety
/// `run` must be NULL or come from this library, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn vt_run_free(run: *mut VtRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `run` must come from this library; `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vt_run_period_count(run: *const VtRun, out_count: *mut usize) -> VtStatus {
    guard(|| {
        *out(out_count)? = handle(run, "run")?.result.periods.len();
        Ok(())
    })
}

/// # Safety
/// `run` must come from this library; `out_period` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vt_run_period(run: *const VtRun, index: usize, out_period: *mut VtPeriod) -> VtStatus {
    guard(|| {
        let slot = out(out_period)?;
        let periods = &handle(run, "run")?.result.periods;
        let p = periods
            .get(index)
            .ok_or_else(|| Fail(VtStatus::OutOfRange, format!("period {index} of {}", periods.len())))?;
        *slot = VtPeriod {
            period_index: p.period_index,
            t: p.t,
            fbr_count: p.fbr_count,
            positive_rate: rate(p.positive_rate),
            negative_rate: rate(p.negative_rate),
            ugt_count: p.ugt_count,
            blr: rate(p.blr),
            n_blr: rate(p.n_blr),
            decision_accuracy: rate(p.decision_accuracy),
        };
        Ok(())
    })
}

/// # Safety
/// `run` must come from this library; `out_totals` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vt_run_totals(run: *const VtRun, out_totals: *mut VtTotals) -> VtStatus {
    guard(|| {
        let slot = out(out_totals)?;
        let t = handle(run, "run")?.result.totals;
        *slot = VtTotals {
            vehicles: t.vehicles,
            messages: t.messages,
            deliveries: t.deliveries,
            decisions: t.decisions,
            reports: t.reports,
            reports_accepted: t.reports_accepted,
            reports_rejected: t.reports_rejected,
            blacklisted: t.blacklisted,
        };
        Ok(())
    })
}

/// Final trust of a node; `out_blacklisted` may be NULL.
///
/// # Safety
/// `run` must come from this library; `out_gt` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vt_run_trust(
    run: *const VtRun,
    node: u32,
    out_gt: *mut f64,
    out_blacklisted: *mut bool,
) -> VtStatus {
    guard(|| {
        let slot = out(out_gt)?;
        let table = &handle(run, "run")?.result.final_trust;
        let node = vanet_trust::NodeId(node);
        *slot = table.gt(node);
        if let Some(b) = out_blacklisted.as_mut() {
            *b = table.is_blacklisted(node);
        }
        Ok(())
    })
}

/// Replays the run log through the oracle and stores the divergence count.
///
/// # Safety
/// `run` must come from this library; `out_divergences` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vt_run_verify(run: *const VtRun, out_divergences: *mut usize) -> VtStatus {
    guard(|| {
        let slot = out(out_divergences)?;
        let rep = oracle_replay(&handle(run, "run")?.log);
        *slot = rep.divergences.len();
        Ok(())
    })
}

/// Writes the run log, metric CSVs and config echo into `dir`.
///
/// # Safety
/// `run` must come from this library; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn vt_run_write(run: *const VtRun, dir: *const c_char) -> VtStatus {
    guard(|| {
        let r = handle(run, "run")?;
        write_run_dir(Path::new(text(dir, "dir")?), &r.log, &r.result)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_map_to_a_status() {
        assert_eq!(guard(|| panic!("boom")), VtStatus::Panic);
        let msg = unsafe { CStr::from_ptr(vt_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "internal panic");
        assert_eq!(guard(|| Ok(())), VtStatus::Ok);
        assert!(vt_last_error().is_null());
    }

    #[test]
    fn undefined_rates_are_nan() {
        assert!(rate(None).is_nan());
        assert_eq!(rate(Some(0.25)), 0.25);
    }
}
