//! C ABI over mpglab. Handles are opaque pointers owned by the caller and
//! released with the matching `_free`. Every fallible call returns an
//! `MpgStatus`; on failure `mpg_last_error()` describes the cause.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mpglab::catalog::{load_catalog, Bindings, Catalog, CatalogError, RangeVerdict};
use mpglab::mpg::{
    amplification_factor, linearize, parse_graph_document, spectral_radius, synthesize_composite_metric,
    Graph, MpgError, PathSpec, Stability, State,
};
use mpglab::report::emit_trajectory_csv;
use mpglab::scenario::{build_case_study, parse_scenario_document, run, ScenarioError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpgStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Validation = 4,
    Evaluation = 5,
    NotFound = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpgStability {
    Stable = 0,
    Marginal = 1,
    Divergent = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpgRangeVerdict {
    InRange = 0,
    SoftWarning = 1,
    HardViolation = 2,
}

/// Opaque metric catalog.
pub struct MpgCatalog(Catalog);

/// Opaque validated propagation graph.
pub struct MpgGraph(Graph);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(MpgStatus, String);

type Res<T> = Result<T, Failure>;

fn fail<T>(status: MpgStatus, msg: impl ToString) -> Res<T> {
    Err(Failure(status, msg.to_string()))
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Res<()>) -> MpgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MpgStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MpgStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return fail(MpgStatus::NullArgument, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(MpgStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Res<&'a mut T> {
    p.as_mut()
        .map_or_else(|| fail(MpgStatus::NullArgument, format!("{what} is null")), Ok)
}

unsafe fn graph<'a>(g: *const MpgGraph) -> Res<&'a Graph> {
    g.as_ref()
        .map(|g| &g.0)
        .map_or_else(|| fail(MpgStatus::NullArgument, "graph is null"), Ok)
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

fn mpg_failure(e: MpgError) -> Failure {
    let status = match e {
        MpgError::UnknownNode(_) => MpgStatus::NotFound,
        _ => MpgStatus::Validation,
    };
    Failure(status, e.to_string())
}

/// Message for the last failed call on this thread; empty after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn mpg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mpg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mpg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The built-in catalog.
///
/// # Safety
/// `out_catalog` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mpg_catalog_builtin(out_catalog: *mut *mut MpgCatalog) -> MpgStatus {
    guard(|| {
        let slot = out(out_catalog, "out_catalog")?;
        *slot = Box::into_raw(Box::new(MpgCatalog(Catalog::builtin().clone())));
        Ok(())
    })
}

/// Loads a `catalog-v1` document.
///
/// # Safety
/// `json` must be NUL-terminated; `out_catalog` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mpg_catalog_from_json(json: *const c_char, out_catalog: *mut *mut MpgCatalog) -> MpgStatus {
    guard(|| {
        let slot = out(out_catalog, "out_catalog")?;
        let cat = load_catalog(text(json, "json")?).map_err(|e| {
            let status = match e {
                CatalogError::Parse(_) | CatalogError::Schema(_) => MpgStatus::Parse,
                _ => MpgStatus::Validation,
            };
            Failure(status, e.to_string())
        })?;
        *slot = Box::into_raw(Box::new(MpgCatalog(cat)));
        Ok(())
    })
}

/// Number of metrics; 0 for null.
///
/// # Safety
/// `catalog` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpg_catalog_len(catalog: *const MpgCatalog) -> usize {
    catalog.as_ref().map_or(0, |c| c.0.len())
}

/// Evaluates metric `id` with `bindings` given as `name=value;name=value`
/// (e.g. `E_total=1.56MWh;E_IT=1MWh`). Writes the value in the metric's
/// unit. `out_unit` and `out_verdict` may be null; a unit string must be
/// released with `mpg_string_free`.
///
/// # Safety
/// Strings must be NUL-terminated; pointers must be valid or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn mpg_catalog_evaluate(
    catalog: *const MpgCatalog,
    id: *const c_char,
    bindings: *const c_char,
    out_value: *mut f64,
    out_unit: *mut *mut c_char,
    out_verdict: *mut MpgRangeVerdict,
) -> MpgStatus {
    guard(|| {
        let cat = catalog
            .as_ref()
            .map_or_else(|| fail(MpgStatus::NullArgument, "catalog is null"), |c| Ok(&c.0))?;
        let id = text(id, "id")?;
        let value_slot = out(out_value, "out_value")?;
        let pairs = if bindings.is_null() { "" } else { text(bindings, "bindings")? };
        let b = Bindings::parse_pairs(pairs.split(';').map(str::trim).filter(|p| !p.is_empty()))
            .map_err(|e| Failure(MpgStatus::Parse, e.to_string()))?;
        if cat.get(id).is_none() {
            return fail(MpgStatus::NotFound, format!("unknown metric '{id}'"));
        }
        let v = cat
            .evaluate(id, &b)
            .map_err(|e| Failure(MpgStatus::Evaluation, e.to_string()))?;
        let verdict = cat
            .check_range(id, &v)
            .map_err(|e| Failure(MpgStatus::Evaluation, e.to_string()))?;
        *value_slot = v.value;
        if let Some(u) = out_unit.as_mut() {
            *u = owned_string(v.unit.to_string());
        }
        if let Some(slot) = out_verdict.as_mut() {
            *slot = match verdict {
                RangeVerdict::Ok => MpgRangeVerdict::InRange,
                RangeVerdict::SoftWarning(_) => MpgRangeVerdict::SoftWarning,
                RangeVerdict::HardViolation(_) => MpgRangeVerdict::HardViolation,
            };
        }
        Ok(())
    })
}

/// # Safety
/// `catalog` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mpg_catalog_free(catalog: *mut MpgCatalog) {
    if !catalog.is_null() {
        drop(Box::from_raw(catalog));
    }
}

/// Parses and validates an `mpg-v1` document.
///
/// # Safety
/// `json` must be NUL-terminated; `out_graph` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mpg_graph_from_json(json: *const c_char, out_graph: *mut *mut MpgGraph) -> MpgStatus {
    guard(|| {
        let slot = out(out_graph, "out_graph")?;
        let g = parse_graph_document(text(json, "json")?).map_err(|e| {
            let status = if e.is_validation() { MpgStatus::Validation } else { MpgStatus::Parse };
            Failure(status, e.to_string())
        })?;
        *slot = Box::into_raw(Box::new(MpgGraph(g)));
        Ok(())
    })
}

/// The built-in five-node case-study graph.
///
/// # Safety
/// `out_graph` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mpg_graph_case_study(out_graph: *mut *mut MpgGraph) -> MpgStatus {
    guard(|| {
        let slot = out(out_graph, "out_graph")?;
        *slot = Box::into_raw(Box::new(MpgGraph(build_case_study().0)));
        Ok(())
    })
}

/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mpg_graph_free(graph: *mut MpgGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Node count; 0 for null.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mpg_graph_node_count(graph: *const MpgGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.nodes().len())
}

/// Writes the propagation matrix at the initial state, row-major, into
/// `buf` of `capacity` doubles. `out_dim` always receives the dimension;
/// if `capacity < dim * dim` nothing is copied and BufferTooSmall is
/// returned, so a first call with a null buffer sizes it.
///
/// # Safety
/// `buf` must hold `capacity` doubles or be null with capacity 0.
#[no_mangle]
pub unsafe extern "C" fn mpg_graph_linearize(
    graph: *const MpgGraph,
    buf: *mut f64,
    capacity: usize,
    out_dim: *mut usize,
) -> MpgStatus {
    guard(|| {
        let g = self::graph(graph)?;
        let dim_slot = out(out_dim, "out_dim")?;
        let w = linearize(g, &State::new(g)).map_err(mpg_failure)?;
        *dim_slot = w.dim();
        let needed = w.dim() * w.dim();
        if capacity < needed || (buf.is_null() && needed > 0) {
            return fail(MpgStatus::BufferTooSmall, format!("need {needed} doubles"));
        }
        if needed > 0 {
            std::slice::from_raw_parts_mut(buf, needed).copy_from_slice(w.as_slice());
        }
        Ok(())
    })
}

/// Spectral radius of the propagation matrix at the initial state.
///
/// # Safety
/// `graph` must be live; `out_rho` valid.
#[no_mangle]
pub unsafe extern "C" fn mpg_graph_spectral_radius(graph: *const MpgGraph, out_rho: *mut f64) -> MpgStatus {
    guard(|| {
        let g = self::graph(graph)?;
        let slot = out(out_rho, "out_rho")?;
        *slot = spectral_radius(&linearize(g, &State::new(g)).map_err(mpg_failure)?).rho;
        Ok(())
    })
}

/// Stability class from the spectral radius.
///
/// # Safety
/// `graph` must be live; `out_stability` valid.
#[no_mangle]
pub unsafe extern "C" fn mpg_graph_stability(graph: *const MpgGraph, out_stability: *mut MpgStability) -> MpgStatus {
    guard(|| {
        let g = self::graph(graph)?;
        let slot = out(out_stability, "out_stability")?;
        let rho = spectral_radius(&linearize(g, &State::new(g)).map_err(mpg_failure)?).rho;
        *slot = match Stability::from_rho(rho) {
            Stability::Stable => MpgStability::Stable,
            Stability::Marginal => MpgStability::Marginal,
            Stability::Divergent => MpgStability::Divergent,
        };
        Ok(())
    })
}

/// Summed path gain from `src` to `dst`; `out_paths` may be null.
///
/// # Safety
/// Strings NUL-terminated; `graph` live; outputs valid or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn mpg_graph_composite(
    graph: *const MpgGraph,
    src: *const c_char,
    dst: *const c_char,
    out_coefficient: *mut f64,
    out_paths: *mut usize,
) -> MpgStatus {
    guard(|| {
        let g = self::graph(graph)?;
        let (s, d) = (text(src, "src")?, text(dst, "dst")?);
        let slot = out(out_coefficient, "out_coefficient")?;
        let c = synthesize_composite_metric(g, s, d).map_err(mpg_failure)?;
        *slot = c.coefficient;
        if let Some(p) = out_paths.as_mut() {
            *p = c.paths;
        }
        Ok(())
    })
}

/// Γ along a comma-separated node path such as `ci,pue,flops_per_watt`.
///
/// # Safety
/// `path` NUL-terminated; `graph` live; outputs valid or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn mpg_graph_amplification(
    graph: *const MpgGraph,
    path: *const c_char,
    out_gamma: *mut f64,
    out_amplifying: *mut bool,
) -> MpgStatus {
    guard(|| {
        let g = self::graph(graph)?;
        let ids: Vec<&str> = text(path, "path")?.split(',').map(str::trim).collect();
        let slot = out(out_gamma, "out_gamma")?;
        let a = amplification_factor(g, &PathSpec::nodes(&ids)).map_err(mpg_failure)?;
        *slot = a.gamma;
        if let Some(f) = out_amplifying.as_mut() {
            *f = a.amplifying;
        }
        Ok(())
    })
}

/// Runs an `scn-v1` document and returns its trajectory CSV. Relative
/// graph paths resolve against `base_dir` (null: the working directory).
/// With `override_seed` set, `seed` replaces the document seed.
///
/// # Safety
/// Strings NUL-terminated or null where allowed; `out_csv` valid. The CSV
/// must be released with `mpg_string_free`.
#[no_mangle]
pub unsafe extern "C" fn mpg_scenario_run_csv(
    scenario_json: *const c_char,
    base_dir: *const c_char,
    override_seed: bool,
    seed: u64,
    out_csv: *mut *mut c_char,
) -> MpgStatus {
    guard(|| {
        let slot = out(out_csv, "out_csv")?;
        let doc = text(scenario_json, "scenario_json")?;
        let base = if base_dir.is_null() { None } else { Some(text(base_dir, "base_dir")?) };
        let scenario_failure = |e: ScenarioError| {
            let status = if e.is_validation() {
                MpgStatus::Validation
            } else if matches!(e, ScenarioError::Io { .. }) {
                MpgStatus::Io
            } else {
                MpgStatus::Parse
            };
            Failure(status, e.to_string())
        };
        let mut scn = parse_scenario_document(doc, base.map(Path::new)).map_err(scenario_failure)?;
        if override_seed {
            scn.seed = seed;
        }
        let traj = run(&scn).map_err(scenario_failure)?;
        *slot = owned_string(emit_trajectory_csv(&traj));
        Ok(())
    })
}
