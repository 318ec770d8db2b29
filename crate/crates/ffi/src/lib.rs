//! C ABI over `dgmlab`.
//!
//! Every function returns a [`DgmStatus`]; on failure the message is available from
//! [`dgm_last_error`] on the same thread. Handles are opaque and must be released with
//! the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dgmlab::experiments::{
    run_deviation_study, run_kernel_validation, run_pinn_study, run_residual_decay_study, run_wide_limit_study,
    ExperimentConfig, Relation, Status, StudyReport,
};
use dgmlab::network::{eval_jet, init_params, smooth_clip, NetworkParams};
use dgmlab::spectral::spectral_decompose;
use dgmlab::Error;
use nalgebra::DMatrix;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Contract = 4,
    Diverged = 5,
    Numerical = 6,
    Io = 7,
    OutOfRange = 8,
    Panic = 9,
}

/// Study selector for [`dgm_run_study`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgmStudy {
    WideLimit = 0,
    ResidualDecay = 1,
    Pinn = 2,
    KernelCheck = 3,
    Deviation = 4,
}

/// Outcome of a single verdict.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgmVerdictStatus {
    Pass = 0,
    Fail = 1,
    NotApplicable = 2,
}

/// One verdict of a report. `relation` is -1 for `<`, 0 for `<=`, 1 for `>=`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DgmVerdict {
    pub measured: f64,
    pub tolerance: f64,
    pub relation: i32,
    pub status: DgmVerdictStatus,
}

/// Parsed experiment configuration.
pub struct DgmConfig(ExperimentConfig);

/// Result of a study.
pub struct DgmReport(StudyReport);

/// Network parameters bound to the architecture of a configuration.
pub struct DgmNetwork {
    params: NetworkParams,
    arch: dgmlab::network::Architecture,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> DgmStatus {
    match err {
        Error::Config(_) | Error::Parse(_) => DgmStatus::Config,
        Error::Contract(_) => DgmStatus::Contract,
        Error::Diverged { .. } => DgmStatus::Diverged,
        Error::AssemblyInconsistency { .. } | Error::PsdViolation { .. } | Error::StepSize { .. } => {
            DgmStatus::Numerical
        }
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => DgmStatus::Io,
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), (DgmStatus, String)>) -> DgmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DgmStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DgmStatus::Panic
        }
    }
}

fn lift<T>(r: dgmlab::Result<T>) -> Result<T, (DgmStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null() -> (DgmStatus, String) {
    (DgmStatus::NullPointer, "null pointer argument".into())
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, (DgmStatus, String)> {
    if s.is_null() {
        return Err(null());
    }
    CStr::from_ptr(s).to_str().map_err(|_| (DgmStatus::InvalidUtf8, "string is not valid UTF-8".into()))
}

unsafe fn reference<'a, T>(p: *const T) -> Result<&'a T, (DgmStatus, String)> {
    p.as_ref().ok_or_else(null)
}

/// Copies the last error message of this thread into `buf` (NUL-terminated, truncated to
/// `len`). Returns the full message length in bytes, 0 if there is none.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn dgm_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dgm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads and validates a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgm_config_load(path: *const c_char, out: *mut *mut DgmConfig) -> DgmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let cfg = lift(ExperimentConfig::load(Path::new(text(path)?)))?;
        lift(cfg.validate())?;
        *out = Box::into_raw(Box::new(DgmConfig(cfg)));
        Ok(())
    })
}

/// Parses and validates a configuration from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgm_config_parse(toml: *const c_char, out: *mut *mut DgmConfig) -> DgmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let cfg = lift(ExperimentConfig::from_toml(text(toml)?))?;
        lift(cfg.validate())?;
        *out = Box::into_raw(Box::new(DgmConfig(cfg)));
        Ok(())
    })
}

/// Shrinks sample counts and horizons for a fast run.
///
/// # Safety
/// `cfg` must come from `dgm_config_load` or `dgm_config_parse`.
#[no_mangle]
pub unsafe extern "C" fn dgm_config_set_quick(cfg: *mut DgmConfig) -> DgmStatus {
    guard(|| {
        cfg.as_mut().ok_or_else(null)?.0.make_quick();
        Ok(())
    })
}

/// Renumbers the network seeds from `seed` and replaces the kernel and batch seeds.
///
/// # Safety
/// `cfg` must come from `dgm_config_load` or `dgm_config_parse`.
#[no_mangle]
pub unsafe extern "C" fn dgm_config_override_seeds(cfg: *mut DgmConfig, seed: u64) -> DgmStatus {
    guard(|| {
        cfg.as_mut().ok_or_else(null)?.0.override_seeds(seed);
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dgm_config_free(cfg: *mut DgmConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs a study; `study` is a [`DgmStudy`] value. `quick` is recorded in the report
/// provenance only.
///
/// # Safety
/// `cfg` must be a live configuration handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgm_run_study(
    cfg: *const DgmConfig,
    study: i32,
    quick: bool,
    out: *mut *mut DgmReport,
) -> DgmStatus {
    guard(|| {
        let cfg = &reference(cfg)?.0;
        if out.is_null() {
            return Err(null());
        }
        let run = match study {
            s if s == DgmStudy::WideLimit as i32 => run_wide_limit_study,
            s if s == DgmStudy::ResidualDecay as i32 => run_residual_decay_study,
            s if s == DgmStudy::Pinn as i32 => run_pinn_study,
            s if s == DgmStudy::KernelCheck as i32 => run_kernel_validation,
            s if s == DgmStudy::Deviation as i32 => run_deviation_study,
            _ => return Err((DgmStatus::OutOfRange, format!("unknown study {study}"))),
        };
        let report = lift(run(cfg, quick))?;
        *out = Box::into_raw(Box::new(DgmReport(report)));
        Ok(())
    })
}

/// Whether every verdict of the report passed.
///
/// # Safety
/// `report` must be a live report handle and `passed` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgm_report_passed(report: *const DgmReport, passed: *mut bool) -> DgmStatus {
    guard(|| {
        let r = &reference(report)?.0;
        *passed.as_mut().ok_or_else(null)? = r.all_passed();
        Ok(())
    })
}

/// Number of verdicts in the report.
///
/// # Safety
/// `report` must be a live report handle and `count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgm_report_verdict_count(report: *const DgmReport, count: *mut usize) -> DgmStatus {
    guard(|| {
        let r = &reference(report)?.0;
        *count.as_mut().ok_or_else(null)? = r.verdicts.len();
        Ok(())
    })
}

/// Verdict `index` of the report.
///
/// # Safety
/// `report` must be a live report handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgm_report_verdict(report: *const DgmReport, index: usize, out: *mut DgmVerdict) -> DgmStatus {
    guard(|| {
        let r = &reference(report)?.0;
        let out = out.as_mut().ok_or_else(null)?;
        let v = r
            .verdicts
            .get(index)
            .ok_or_else(|| (DgmStatus::OutOfRange, format!("verdict {index} of {}", r.verdicts.len())))?;
        *out = DgmVerdict {
            measured: v.measured,
            tolerance: v.tolerance,
            relation: match v.relation {
                Relation::Less => -1,
                Relation::LessEq => 0,
                Relation::GreaterEq => 1,
            },
            status: match v.status {
                Status::Pass => DgmVerdictStatus::Pass,
                Status::Fail => DgmVerdictStatus::Fail,
                Status::NotApplicable => DgmVerdictStatus::NotApplicable,
            },
        };
        Ok(())
    })
}

/// Writes `summary.json` and the CSV tables into `dir`.
///
/// # Safety
/// `report` must be a live report handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dgm_report_write(report: *const DgmReport, dir: *const c_char) -> DgmStatus {
    guard(|| {
        let r = &reference(report)?.0;
        lift(r.write(Path::new(text(dir)?)))
    })
}

/// # Safety
/// `report` must be null or come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dgm_report_free(report: *mut DgmReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Draws initial parameters for width `width` using the configuration's domain,
/// activation, and initial distribution.
///
/// # Safety
/// `cfg` must be a live configuration handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgm_network_init(
    cfg: *const DgmConfig,
    width: usize,
    seed: u64,
    out: *mut *mut DgmNetwork,
) -> DgmStatus {
    guard(|| {
        let cfg = &reference(cfg)?.0;
        if out.is_null() {
            return Err(null());
        }
        let params =
            lift(init_params(width, cfg.domain.dim(), &cfg.init_distribution(), cfg.network.beta, seed))?;
        *out = Box::into_raw(Box::new(DgmNetwork { params, arch: cfg.architecture() }));
        Ok(())
    })
}

/// Number of trainable parameters, `(d + 2) N`.
///
/// # Safety
/// `net` must be a live network handle and `count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgm_network_param_count(net: *const DgmNetwork, count: *mut usize) -> DgmStatus {
    guard(|| {
        *count.as_mut().ok_or_else(null)? = reference(net)?.params.len();
        Ok(())
    })
}

/// Value of the network at `x` (length `dim`).
///
/// # Safety
/// `x` must be valid for `dim` reads and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgm_network_eval(
    net: *const DgmNetwork,
    x: *const f64,
    dim: usize,
    value: *mut f64,
) -> DgmStatus {
    guard(|| {
        let net = reference(net)?;
        if x.is_null() || value.is_null() {
            return Err(null());
        }
        if dim != net.params.dim() {
            return Err((DgmStatus::Contract, format!("point has dimension {dim}, network expects {}", net.params.dim())));
        }
        let x = std::slice::from_raw_parts(x, dim);
        *value = eval_jet(&net.params, &net.arch.eta, net.arch.act, x).value;
        Ok(())
    })
}

/// # Safety
/// `net` must be null or come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dgm_network_free(net: *mut DgmNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Smooth clipping of `v` at threshold `t`.
#[no_mangle]
pub extern "C" fn dgm_smooth_clip(v: f64, t: f64) -> f64 {
    smooth_clip(v, t)
}

/// Eigenvalues (descending) of the symmetric row-major `n × n` matrix `m` into
/// `eigenvalues`, and the number of modes above `tau λ₁` into `positive`.
///
/// # Safety
/// `m` must be valid for `n * n` reads, `eigenvalues` for `n` writes, `positive` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgm_spectral_decompose(
    m: *const f64,
    n: usize,
    tau: f64,
    eigenvalues: *mut f64,
    positive: *mut usize,
) -> DgmStatus {
    guard(|| {
        if m.is_null() || eigenvalues.is_null() || positive.is_null() {
            return Err(null());
        }
        let mat = DMatrix::from_row_slice(n, n, std::slice::from_raw_parts(m, n * n));
        let dec = lift(spectral_decompose(&mat, tau))?;
        std::slice::from_raw_parts_mut(eigenvalues, n).copy_from_slice(dec.eigenvalues());
        *positive = dec.positive_count();
        Ok(())
    })
}
