//! C ABI over the audit library.
//!
//! Every function returns a [`UaStatus`]. On failure a message is kept per
//! thread and can be read with [`ua_last_error`]. Strings handed out by the
//! library are owned by the caller and must be released with
//! [`ua_string_free`]; collectors with [`ua_collector_free`].
//!
//! A collector speaks the same line protocol as the `UAP/1` stream: feed it
//! request lines (`ADD {...}`, `DEL {...}`, `EVAL {...}`) and it returns
//! reply lines (`ACK`, `REFUSED <reason>`, `PRED {...}`).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use unlearn_audit::cli::config::ExperimentConfig;
use unlearn_audit::cli::presets::{run_preset, PresetOptions};
use unlearn_audit::compliance::{decode_message, encode_response, Behaviour, DataCollector, DatCol};
use unlearn_audit::error::AuditError;
use unlearn_audit::learners::LearnerSpec;

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ConfigInvalid = 3,
    Io = 4,
    Protocol = 5,
    UnknownPreset = 6,
    Failed = 7,
    Panic = 8,
}

/// A data collector behind an opaque pointer.
pub struct UaCollector {
    inner: DatCol,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &AuditError) -> UaStatus {
    match e {
        AuditError::ConfigInvalid { .. } | AuditError::InvalidArgument(_) => UaStatus::ConfigInvalid,
        AuditError::Io(_) => UaStatus::Io,
        AuditError::Protocol(_) => UaStatus::Protocol,
        AuditError::UnknownPreset(_) => UaStatus::UnknownPreset,
        _ => UaStatus::Failed,
    }
}

/// Runs `f`, turning errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), (UaStatus, String)>) -> UaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UaStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            UaStatus::Panic
        }
    }
}

fn audit(e: AuditError) -> (UaStatus, String) {
    (status_of(&e), e.to_string())
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (UaStatus, String)> {
    if p.is_null() {
        return Err((UaStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (UaStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// # Safety
/// `out` is null or valid for one pointer write.
unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), (UaStatus, String)> {
    if out.is_null() {
        return Err((UaStatus::NullArgument, "output pointer is null".into()));
    }
    let c = CString::new(s).map_err(|_| (UaStatus::Failed, "output contains a NUL byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ua_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ua_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ua_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Runs an experiment from TOML text and writes the JSON report to `*report_json`.
///
/// # Safety
/// `config_toml` is a valid NUL-terminated string; `report_json` is valid
/// for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn ua_run_config(config_toml: *const c_char, report_json: *mut *mut c_char) -> UaStatus {
    guard(|| {
        let text = read_str(config_toml, "config_toml")?;
        let cfg = ExperimentConfig::parse(text).map_err(audit)?;
        let run = unlearn_audit::cli::execute(&cfg).map_err(audit)?;
        write_string(report_json, run.report.to_json())
    })
}

/// Runs a named preset and writes its criterion outcomes as JSON.
///
/// # Safety
/// `preset` is a valid NUL-terminated string; `outcomes_json` is valid for
/// one pointer write.
#[no_mangle]
pub unsafe extern "C" fn ua_reproduce(preset: *const c_char, seed: u64, outcomes_json: *mut *mut c_char) -> UaStatus {
    guard(|| {
        let name = read_str(preset, "preset")?;
        let run = run_preset(name, PresetOptions { seed, trials: None }).map_err(audit)?;
        let json = serde_json::to_string(&run.criteria).map_err(|e| (UaStatus::Failed, e.to_string()))?;
        write_string(outcomes_json, json)
    })
}

/// Creates an honest collector that stores `capacity` records and honours
/// `budget` deletions. `learner_json` is a learner table such as
/// `{"kind":"decision_tree"}`.
///
/// # Safety
/// `learner_json` is a valid NUL-terminated string; `out` is valid for one
/// pointer write.
#[no_mangle]
pub unsafe extern "C" fn ua_collector_new(
    learner_json: *const c_char,
    capacity: usize,
    budget: usize,
    seed: u64,
    out: *mut *mut UaCollector,
) -> UaStatus {
    guard(|| {
        if out.is_null() {
            return Err((UaStatus::NullArgument, "output pointer is null".into()));
        }
        let spec: LearnerSpec = serde_json::from_str(read_str(learner_json, "learner_json")?)
            .map_err(|e| (UaStatus::ConfigInvalid, format!("learner: {e}")))?;
        let inner = DatCol::new(spec, capacity, budget, seed, Behaviour::Honest).map_err(audit)?;
        *out = Box::into_raw(Box::new(UaCollector { inner }));
        Ok(())
    })
}

/// Sends one request line and writes the reply line to `*reply`.
///
/// # Safety
/// `collector` comes from [`ua_collector_new`]; `request` is a valid
/// NUL-terminated string; `reply` is valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn ua_collector_send(
    collector: *mut UaCollector,
    request: *const c_char,
    reply: *mut *mut c_char,
) -> UaStatus {
    guard(|| {
        let c = collector.as_mut().ok_or((UaStatus::NullArgument, "collector is null".to_string()))?;
        let msg = decode_message(read_str(request, "request")?).map_err(audit)?;
        let r = c.inner.handle(&msg).map_err(audit)?;
        write_string(reply, encode_response(&r))
    })
}

/// Releases a collector. Null is ignored.
///
/// # Safety
/// `collector` is null or comes from [`ua_collector_new`] and is not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ua_collector_free(collector: *mut UaCollector) {
    if !collector.is_null() {
        drop(Box::from_raw(collector));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_codes_are_stable() {
        assert_eq!(UaStatus::Ok as i32, 0);
        assert_eq!(UaStatus::Panic as i32, 8);
        assert_eq!(status_of(&AuditError::UnknownPreset("x".into())), UaStatus::UnknownPreset);
    }

    #[test]
    fn null_arguments_are_reported() {
        let mut out = std::ptr::null_mut();
        assert_eq!(unsafe { ua_run_config(std::ptr::null(), &mut out) }, UaStatus::NullArgument);
        let msg = unsafe { CStr::from_ptr(ua_last_error()) }.to_str().unwrap();
        assert_eq!(msg, "config_toml is null");
    }
}
