//! C ABI over `refmi`.
//!
//! Every fallible call returns a [`RefmiStatus`]. On failure the message is
//! kept per thread and read back with [`refmi_last_error`]. Datasets and
//! imputation sets are opaque handles owned by the caller and released with
//! their `_free` functions. Strings returned by the library are released
//! with [`refmi_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use refmi::analysis::{analyze_and_pool, AnalysisMethod};
use refmi::freqvar::{boot_then_impute, vonhippel_pool};
use refmi::impute::{impute_dataset, Strategy};
use refmi::sim::{run_scenario, ScenarioConfig};
use refmi::{Error, SeedStream, TrialDataset};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefmiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    /// Malformed or inconsistent trial data.
    Data = 4,
    /// Fitting or linear algebra failed.
    Numeric = 5,
    Config = 6,
    /// A simulation had too many failing replications.
    Simulation = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefmiStrategy {
    Mar = 0,
    J2r = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefmiAnalysis {
    DiffMeans = 0,
    Ancova = 1,
}

/// Rubin's-rules result.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RefmiPooled {
    pub estimate: f64,
    pub se: f64,
    pub df: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub within: f64,
    pub between: f64,
    pub total: f64,
    pub imputations: usize,
}

/// Bootstrap-then-impute result.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RefmiBootMi {
    pub estimate: f64,
    pub variance: f64,
    pub df: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub sigma2_between: f64,
    pub sigma2_within: f64,
    pub bootstraps: usize,
    pub imputations: usize,
}

/// A validated trial dataset.
pub struct RefmiDataset(TrialDataset);

/// Completed copies of a dataset.
pub struct RefmiImputations(Vec<TrialDataset>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RefmiStatus {
    match e {
        Error::Io(_) => RefmiStatus::Io,
        Error::Config(_) => RefmiStatus::Config,
        Error::TooManyFailures { .. } => RefmiStatus::Simulation,
        Error::InvalidInput(_) | Error::TooFewImputations(_) => RefmiStatus::InvalidArgument,
        Error::NonMonotoneMissingness { .. }
        | Error::MissingBaseline { .. }
        | Error::MalformedRow { .. }
        | Error::DuplicateIds { .. }
        | Error::EmptyArm(_)
        | Error::DegenerateVariance { .. }
        | Error::Incomplete { .. }
        | Error::NoObservedReference
        | Error::InsufficientData { .. } => RefmiStatus::Data,
        _ => RefmiStatus::Numeric,
    }
}

struct Failure(RefmiStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RefmiStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> RefmiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RefmiStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            RefmiStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(RefmiStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

fn to_strategy(s: RefmiStrategy) -> Strategy {
    match s {
        RefmiStrategy::Mar => Strategy::Mar,
        RefmiStrategy::J2r => Strategy::J2r,
    }
}

fn to_analysis(a: RefmiAnalysis) -> AnalysisMethod {
    match a {
        RefmiAnalysis::DiffMeans => AnalysisMethod::DiffMeans,
        RefmiAnalysis::Ancova => AnalysisMethod::Ancova,
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn refmi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn refmi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a trial CSV (`id,arm,y0,...,yJ`).
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn refmi_dataset_load_csv(path: *const c_char, out: *mut *mut RefmiDataset) -> RefmiStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let data = TrialDataset::load_csv(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(RefmiDataset(data)));
        Ok(())
    })
}

/// Parses a trial CSV held in memory.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn refmi_dataset_parse_csv(text: *const c_char, out: *mut *mut RefmiDataset) -> RefmiStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let data = TrialDataset::read_csv(str_arg(text, "text")?.as_bytes())?;
        *out = Box::into_raw(Box::new(RefmiDataset(data)));
        Ok(())
    })
}

/// Number of patients, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn refmi_dataset_len(data: *const RefmiDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.len())
}

/// Index `J` of the final visit, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn refmi_dataset_last_visit(data: *const RefmiDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.last_visit())
}

/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn refmi_dataset_free(data: *mut RefmiDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Draws `m` completed copies of `data`. `proper` draws fresh parameters
/// for every imputation; otherwise all condition on the MLE.
///
/// # Safety
/// `data` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn refmi_impute(
    data: *const RefmiDataset,
    strategy: RefmiStrategy,
    m: usize,
    proper: bool,
    seed: u64,
    out: *mut *mut RefmiImputations,
) -> RefmiStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let data = data.as_ref().ok_or_else(|| null("data"))?;
        let done = impute_dataset(&data.0, to_strategy(strategy), m, proper, SeedStream::new(seed))?;
        *out = Box::into_raw(Box::new(RefmiImputations(done)));
        Ok(())
    })
}

/// # Safety
/// `imps` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn refmi_imputations_count(imps: *const RefmiImputations) -> usize {
    imps.as_ref().map_or(0, |i| i.0.len())
}

/// Writes completed dataset `index` (0-based) as CSV.
///
/// # Safety
/// `imps` must be a live handle and `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn refmi_imputations_write_csv(
    imps: *const RefmiImputations,
    index: usize,
    path: *const c_char,
) -> RefmiStatus {
    guard(|| {
        let imps = imps.as_ref().ok_or_else(|| null("imputations"))?;
        let d = imps.0.get(index).ok_or_else(|| {
            Failure(RefmiStatus::InvalidArgument, format!("index {index} of {} imputations", imps.0.len()))
        })?;
        d.save_csv(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `imps` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn refmi_imputations_free(imps: *mut RefmiImputations) {
    if !imps.is_null() {
        drop(Box::from_raw(imps));
    }
}

/// Analyzes every completed dataset and pools with Rubin's rules.
///
/// # Safety
/// `imps` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn refmi_pool_rubin(
    imps: *const RefmiImputations,
    method: RefmiAnalysis,
    alpha: f64,
    out: *mut RefmiPooled,
) -> RefmiStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let imps = imps.as_ref().ok_or_else(|| null("imputations"))?;
        let p = analyze_and_pool(&imps.0, to_analysis(method), alpha)?;
        *out = RefmiPooled {
            estimate: p.theta_bar,
            se: p.se(),
            df: p.df,
            ci_lower: p.ci.0,
            ci_upper: p.ci.1,
            within: p.w_bar,
            between: p.b,
            total: p.t_total,
            imputations: p.m,
        };
        Ok(())
    })
}

/// Bootstrap-then-impute with `b` resamples and `m` imputations each.
///
/// # Safety
/// `data` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn refmi_bootstrap(
    data: *const RefmiDataset,
    strategy: RefmiStrategy,
    method: RefmiAnalysis,
    b: usize,
    m: usize,
    seed: u64,
    alpha: f64,
    out: *mut RefmiBootMi,
) -> RefmiStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let data = data.as_ref().ok_or_else(|| null("data"))?;
        let grid = boot_then_impute(&data.0, to_strategy(strategy), to_analysis(method), b, m, SeedStream::new(seed))?;
        let e = vonhippel_pool(&grid, alpha)?;
        *out = RefmiBootMi {
            estimate: e.theta_bar,
            variance: e.v_hat,
            df: e.df,
            ci_lower: e.ci.0,
            ci_upper: e.ci.1,
            sigma2_between: e.sigma2_b,
            sigma2_within: e.sigma2_w,
            bootstraps: e.bootstraps,
            imputations: e.imputations,
        };
        Ok(())
    })
}

/// Runs a scenario given as JSON and returns the report as JSON without
/// timing, so identical configs give identical strings. Free the result
/// with [`refmi_string_free`].
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn refmi_simulate_json(config_json: *const c_char, out: *mut *mut c_char) -> RefmiStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = ScenarioConfig::from_json(str_arg(config_json, "config_json")?)?;
        let report = run_scenario(&cfg)?.without_timing();
        let text = CString::new(report.to_json()).expect("JSON has no NUL");
        *out = text.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn refmi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
