//! C interface to the gragra miner.
//!
//! Every fallible function returns a [`GragraStatus`]; on failure the message
//! is available from [`gragra_last_error`] on the same thread. Handles are
//! opaque and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gragra::io::{self, ResultDocument};
use gragra::model::{GraphGroupDataset, SupportThreshold};
use gragra::search::{mine, MineConfig, Variant};
use gragra::{ErrorKind, GragraError};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GragraStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Config = 4,
    Runtime = 5,
    OutOfRange = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GragraVariant {
    Test = 0,
    Bic = 1,
}

/// A parsed graph-group dataset.
pub struct GragraDataset(GraphGroupDataset);

/// Mining options; starts from the library defaults.
pub struct GragraConfig {
    mine: MineConfig,
    threshold: SupportThreshold,
}

/// A finished mining run.
pub struct GragraResult(ResultDocument);

/// One edge of a pattern.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GragraEdge {
    pub src: u32,
    pub dst: u32,
    pub weight: u16,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: GragraStatus, msg: impl Into<String>) -> GragraStatus {
    set_error(msg);
    status
}

fn from_error(e: GragraError) -> GragraStatus {
    let status = match e.kind() {
        ErrorKind::Parse => GragraStatus::Parse,
        ErrorKind::Config => GragraStatus::Config,
        ErrorKind::Runtime => GragraStatus::Runtime,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning panics into `GragraStatus::Panic`.
fn guard(f: impl FnOnce() -> GragraStatus) -> GragraStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(GragraStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(s: *const c_char) -> Result<&'a str, GragraStatus> {
    if s.is_null() {
        return Err(fail(GragraStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(GragraStatus::InvalidUtf8, "string argument is not valid UTF-8"))
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(GragraStatus::NullArgument, concat!("null argument: ", stringify!($p)));
        })+
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gragra_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn gragra_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a dataset in text or JSON form. `bins` of 0 keeps the header's
/// bin count.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gragra_dataset_parse(text: *const c_char, bins: u16, out: *mut *mut GragraDataset) -> GragraStatus {
    guard(|| {
        non_null!(out);
        let text = match str_arg(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match io::parse_dataset(text, (bins > 0).then_some(bins)) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(GragraDataset(ds)));
                GragraStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Generates a dataset from a named synthetic preset.
///
/// # Safety
/// `preset` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gragra_dataset_synth(preset: *const c_char, seed: u64, out: *mut *mut GragraDataset) -> GragraStatus {
    guard(|| {
        non_null!(out);
        let name = match str_arg(preset) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match gragra::synth::preset(name, seed).and_then(|c| gragra::synth::generate(&c)) {
            Ok(o) => {
                *out = Box::into_raw(Box::new(GragraDataset(o.dataset)));
                GragraStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `ds` must be null or a handle from this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gragra_dataset_free(ds: *mut GragraDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// `ds` must be a live dataset handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gragra_dataset_group_count(ds: *const GragraDataset, out: *mut usize) -> GragraStatus {
    guard(|| {
        non_null!(ds, out);
        *out = (*ds).0.k();
        GragraStatus::Ok
    })
}

/// # Safety
/// `ds` must be a live dataset handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gragra_dataset_graph_count(ds: *const GragraDataset, out: *mut usize) -> GragraStatus {
    guard(|| {
        non_null!(ds, out);
        *out = (*ds).0.total_graphs();
        GragraStatus::Ok
    })
}

/// Default options: test variant, alpha 1e-7 (1e-5 below 50 graphs),
/// minimum support 2, at most 16 patterns per factor.
#[no_mangle]
pub extern "C" fn gragra_config_new() -> *mut GragraConfig {
    Box::into_raw(Box::new(GragraConfig {
        mine: MineConfig::default(),
        threshold: SupportThreshold::MinSupport(2),
    }))
}

/// # Safety
/// `cfg` must be null or a handle from this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gragra_config_free(cfg: *mut GragraConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn gragra_config_set_variant(cfg: *mut GragraConfig, variant: GragraVariant) -> GragraStatus {
    guard(|| {
        non_null!(cfg);
        (*cfg).mine.variant = match variant {
            GragraVariant::Test => Variant::Test,
            GragraVariant::Bic => Variant::Bic,
        };
        GragraStatus::Ok
    })
}

/// Sets the significance levels and the small-sample cutoff.
///
/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn gragra_config_set_significance(
    cfg: *mut GragraConfig,
    alpha: f64,
    alpha_small: f64,
    small_cutoff: usize,
) -> GragraStatus {
    guard(|| {
        non_null!(cfg);
        let sig = gragra::stats::SignificanceConfig {
            alpha,
            alpha_small,
            small_sample_cutoff: small_cutoff,
        };
        if let Err(e) = sig.validate() {
            return from_error(e);
        }
        (*cfg).mine.significance = sig;
        GragraStatus::Ok
    })
}

/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn gragra_config_set_min_support(cfg: *mut GragraConfig, support: u32) -> GragraStatus {
    guard(|| {
        non_null!(cfg);
        let t = SupportThreshold::MinSupport(support);
        if let Err(e) = t.validate() {
            return from_error(e);
        }
        (*cfg).threshold = t;
        GragraStatus::Ok
    })
}

/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn gragra_config_set_adaptive_frac(cfg: *mut GragraConfig, frac: f64) -> GragraStatus {
    guard(|| {
        non_null!(cfg);
        let t = SupportThreshold::Adaptive(frac);
        if let Err(e) = t.validate() {
            return from_error(e);
        }
        (*cfg).threshold = t;
        GragraStatus::Ok
    })
}

/// `threads` of 0 uses the global pool.
///
/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn gragra_config_set_threads(cfg: *mut GragraConfig, threads: usize) -> GragraStatus {
    guard(|| {
        non_null!(cfg);
        (*cfg).mine.threads = (threads > 0).then_some(threads);
        GragraStatus::Ok
    })
}

/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn gragra_config_set_max_factor_patterns(cfg: *mut GragraConfig, cap: usize) -> GragraStatus {
    guard(|| {
        non_null!(cfg);
        (*cfg).mine.fit.max_factor_patterns = cap;
        match (*cfg).mine.validate() {
            Ok(()) => GragraStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// `max` of 0 removes the limit.
///
/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn gragra_config_set_max_patterns(cfg: *mut GragraConfig, max: usize) -> GragraStatus {
    guard(|| {
        non_null!(cfg);
        (*cfg).mine.max_patterns = (max > 0).then_some(max);
        GragraStatus::Ok
    })
}

/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn gragra_config_set_seed(cfg: *mut GragraConfig, seed: u64) -> GragraStatus {
    guard(|| {
        non_null!(cfg);
        (*cfg).mine.seed = seed;
        GragraStatus::Ok
    })
}

/// Sparsifies a copy of the dataset and mines it. A null `cfg` uses the
/// defaults.
///
/// # Safety
/// `ds` must be a live dataset handle, `cfg` null or a live config handle,
/// and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gragra_mine(ds: *const GragraDataset, cfg: *const GragraConfig, out: *mut *mut GragraResult) -> GragraStatus {
    guard(|| {
        non_null!(ds, out);
        let (mine_cfg, threshold) = if cfg.is_null() {
            (MineConfig::default(), SupportThreshold::MinSupport(2))
        } else {
            ((*cfg).mine.clone(), (*cfg).threshold)
        };
        let mut dataset = (*ds).0.clone();
        let fingerprint = io::fingerprint(&dataset);
        let run = dataset.sparsify(threshold).and_then(|_| mine(&dataset, &mine_cfg));
        match run {
            Ok(result) => {
                let doc = ResultDocument {
                    tool_version: io::TOOL_VERSION.to_string(),
                    dataset_fingerprint: fingerprint,
                    n: dataset.meta.n,
                    directed: dataset.meta.directed,
                    bins: dataset.meta.weight_categories,
                    threshold,
                    result,
                };
                *out = Box::into_raw(Box::new(GragraResult(doc)));
                GragraStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `res` must be null or a handle from this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gragra_result_free(res: *mut GragraResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// # Safety
/// `res` must be a live result handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gragra_result_pattern_count(res: *const GragraResult, out: *mut usize) -> GragraStatus {
    guard(|| {
        non_null!(res, out);
        *out = (*res).0.result.patterns.len();
        GragraStatus::Ok
    })
}

/// Copies up to `cap` edges of pattern `index` into `edges` and stores the
/// pattern's full length in `len`. Pass `cap = 0` to query the length.
///
/// # Safety
/// `res` must be a live result handle, `len` a valid pointer and `edges`
/// valid for `cap` writes (may be null when `cap` is 0).
#[no_mangle]
pub unsafe extern "C" fn gragra_result_pattern_edges(
    res: *const GragraResult,
    index: usize,
    edges: *mut GragraEdge,
    cap: usize,
    len: *mut usize,
) -> GragraStatus {
    guard(|| {
        non_null!(res, len);
        let patterns = &(*res).0.result.patterns;
        let Some(p) = patterns.get(index) else {
            return fail(
                GragraStatus::OutOfRange,
                format!("pattern {index} out of range ({} patterns)", patterns.len()),
            );
        };
        *len = p.len();
        if cap > 0 {
            non_null!(edges);
            for (i, e) in p.edges().iter().take(cap).enumerate() {
                *edges.add(i) = GragraEdge {
                    src: e.src,
                    dst: e.dst,
                    weight: e.weight,
                };
            }
        }
        GragraStatus::Ok
    })
}

/// Whether pattern `index` is associated with group `group`.
///
/// # Safety
/// `res` must be a live result handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gragra_result_association(res: *const GragraResult, group: usize, index: usize, out: *mut bool) -> GragraStatus {
    guard(|| {
        non_null!(res, out);
        let a = &(*res).0.result.association;
        if group >= a.k() || index >= a.columns() {
            return fail(
                GragraStatus::OutOfRange,
                format!("({group}, {index}) outside a {}x{} association matrix", a.k(), a.columns()),
            );
        }
        *out = a.get(group, index);
        GragraStatus::Ok
    })
}

/// Serializes the result document as JSON. Free the string with
/// [`gragra_string_free`].
///
/// # Safety
/// `res` must be a live result handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gragra_result_to_json(res: *const GragraResult, out: *mut *mut c_char) -> GragraStatus {
    guard(|| {
        non_null!(res, out);
        match (*res).0.to_json() {
            Ok(s) => match CString::new(s) {
                Ok(c) => {
                    *out = c.into_raw();
                    GragraStatus::Ok
                }
                Err(_) => fail(GragraStatus::Runtime, "result JSON contains a NUL byte"),
            },
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `s` must be null or a string returned by this library that was not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gragra_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Upper tail probability of the chi-squared distribution.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gragra_chi2_sf(x: f64, df: u32, out: *mut f64) -> GragraStatus {
    guard(|| {
        non_null!(out);
        match gragra::stats::chi2_sf(x, df) {
            Ok(p) => {
                *out = p;
                GragraStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
