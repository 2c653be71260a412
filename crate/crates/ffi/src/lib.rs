//! C ABI over `bitree-embed`.
//!
//! Every fallible call returns a [`BeStatus`]; on failure the message is kept
//! per thread and read with [`be_last_error`]. Instances are opaque handles
//! released with [`be_instance_free`]; strings returned by the library are
//! released with [`be_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bitree_embed::constants::{
    box_constant, carleson_constant, embedding_constant, hereditary_constant, verify_chain,
    CarlesonMethod, HereditaryMethod, DEFAULT_EMBEDDING_TOL,
};
use bitree_embed::extremal::construction_by_name;
use bitree_embed::harness::{build_instance, parse_instance, parse_scenario, report_json, run_scenario};
use bitree_embed::random::{sample, Distribution};
use bitree_embed::{BiTreeTopology, Error, MassFunction, WeightFunction};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Size = 3,
    Parameter = 4,
    Precondition = 5,
    Postcondition = 6,
    Tag = 7,
    Solver = 8,
    Parse = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BeConstant {
    Box = 0,
    Carleson = 1,
    Hereditary = 2,
    Embedding = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BeDistribution {
    General = 0,
    Boundary = 1,
    ProductWeight = 2,
    ProductBoundary = 3,
}

/// The four constants and the chain ratios.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BeChain {
    pub box_value: f64,
    pub carleson: f64,
    pub hereditary: f64,
    pub embedding: f64,
    pub c_over_box: f64,
    pub hc_over_c: f64,
    pub ce_over_hc: f64,
    pub ce_over_box: f64,
}

/// A measure and weight on a dense bi-tree.
pub struct BeInstance {
    topo: BiTreeTopology,
    mu: MassFunction,
    w: WeightFunction,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> BeStatus {
    match err {
        Error::Size(_) => BeStatus::Size,
        Error::Parameter(_) => BeStatus::Parameter,
        Error::Precondition(_) => BeStatus::Precondition,
        Error::Postcondition(_) => BeStatus::Postcondition,
        Error::Tag(_) => BeStatus::Tag,
        Error::Solver(_) => BeStatus::Solver,
        Error::Parse { .. } => BeStatus::Parse,
    }
}

struct Fail(BeStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BeStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BeStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("panic inside bitree-embed".into());
            BeStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(BeStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(BeStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn instance<'a>(inst: *const BeInstance) -> Result<&'a BeInstance, Fail> {
    inst.as_ref().ok_or_else(|| null("instance"))
}

unsafe fn store(out: *mut *mut BeInstance, inst: BeInstance) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(inst));
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn be_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn be_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Seeded random instance on the bi-tree of depth `(depth_x, depth_y)`.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn be_instance_random(
    depth_x: u32,
    depth_y: u32,
    seed: u64,
    distribution: BeDistribution,
    out: *mut *mut BeInstance,
) -> BeStatus {
    guard(|| {
        let topo = BiTreeTopology::new(depth_x, depth_y)?;
        let dist = match distribution {
            BeDistribution::General => Distribution::General,
            BeDistribution::Boundary => Distribution::Boundary,
            BeDistribution::ProductWeight => Distribution::ProductWeight,
            BeDistribution::ProductBoundary => Distribution::ProductBoundary,
        };
        let (mu, w) = sample(&topo, seed, dist);
        store(out, BeInstance { topo, mu, w })
    })
}

/// Instance from dense arrays of length `len` in bi-index order
/// `x · |T_y| + y`, each axis indexed `2^gen + off - 1`.
///
/// # Safety
/// `mass` and `weight` must point to `len` readable doubles; `out` must be
/// valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn be_instance_new(
    depth_x: u32,
    depth_y: u32,
    mass: *const f64,
    weight: *const f64,
    len: usize,
    out: *mut *mut BeInstance,
) -> BeStatus {
    guard(|| {
        if mass.is_null() || weight.is_null() {
            return Err(null("mass or weight"));
        }
        let topo = BiTreeTopology::new(depth_x, depth_y)?;
        if len != topo.len() {
            return Err(Error::Size(format!("expected {} values, got {len}", topo.len())).into());
        }
        let mu = MassFunction::new(&topo, std::slice::from_raw_parts(mass, len).to_vec())?;
        let w = WeightFunction::general(&topo, std::slice::from_raw_parts(weight, len).to_vec())?;
        store(out, BeInstance { topo, mu, w })
    })
}

/// Dense copy of a builtin counterexample family at depth `n ≤ 8`.
///
/// # Safety
/// `name` must be a nul-terminated string; `out` must be valid for writing
/// one pointer.
#[no_mangle]
pub unsafe extern "C" fn be_instance_builtin(name: *const c_char, n: u32, out: *mut *mut BeInstance) -> BeStatus {
    guard(|| {
        let c = construction_by_name(text(name, "name")?, n)?;
        if n > bitree_embed::extremal::MAX_DENSE_EXTREMAL_DEPTH {
            return Err(Error::Size(format!("N = {n} is too deep for a dense copy")).into());
        }
        let (topo, mu, w) = c.materialize()?;
        store(out, BeInstance { topo, mu, w })
    })
}

/// Instance from a JSON instance source (`{"source": ...}`).
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be valid for writing
/// one pointer.
#[no_mangle]
pub unsafe extern "C" fn be_instance_from_json(json: *const c_char, out: *mut *mut BeInstance) -> BeStatus {
    guard(|| {
        let source = parse_instance(text(json, "json")?)?;
        let (topo, mu, w) = build_instance(&source)?
            .dense
            .ok_or_else(|| Error::Size("instance has no dense copy".into()))?;
        store(out, BeInstance { topo, mu, w })
    })
}

/// Releases an instance; null is ignored.
///
/// # Safety
/// `inst` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn be_instance_free(inst: *mut BeInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Number of bi-nodes, 0 for null.
///
/// # Safety
/// `inst` must be null or a live instance.
#[no_mangle]
pub unsafe extern "C" fn be_instance_len(inst: *const BeInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.topo.len())
}

/// One constant with the default exact method.
///
/// # Safety
/// `inst` must be a live instance and `value` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn be_constant(inst: *const BeInstance, kind: BeConstant, value: *mut f64) -> BeStatus {
    guard(|| {
        let i = instance(inst)?;
        if value.is_null() {
            return Err(null("value"));
        }
        let report = match kind {
            BeConstant::Box => box_constant(&i.topo, &i.mu, &i.w),
            BeConstant::Carleson => carleson_constant(&i.topo, &i.mu, &i.w, CarlesonMethod::ExactMincut)?,
            BeConstant::Hereditary => hereditary_constant(&i.topo, &i.mu, &i.w, HereditaryMethod::ExactEnum)?,
            BeConstant::Embedding => embedding_constant(&i.topo, &i.mu, &i.w, DEFAULT_EMBEDDING_TOL)?,
        };
        *value = report.value;
        Ok(())
    })
}

/// All four constants; fails with `POSTCONDITION` if the chain breaks.
///
/// # Safety
/// `inst` must be a live instance and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn be_verify_chain(inst: *const BeInstance, out: *mut BeChain) -> BeStatus {
    guard(|| {
        let i = instance(inst)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = verify_chain(&i.topo, &i.mu, &i.w)?;
        *out = BeChain {
            box_value: r.box_report.value,
            carleson: r.carleson.value,
            hereditary: r.hereditary.value,
            embedding: r.embedding.value,
            c_over_box: r.c_over_box,
            hc_over_c: r.hc_over_c,
            ce_over_hc: r.ce_over_hc,
            ce_over_box: r.ce_over_box,
        };
        Ok(())
    })
}

/// Runs a scenario and returns the JSON report in `*out`, to be released
/// with [`be_string_free`]. Task failures are reported inside the JSON.
///
/// # Safety
/// `scenario` must be a nul-terminated string; `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn be_run_scenario(scenario: *const c_char, out: *mut *mut c_char) -> BeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = parse_scenario(text(scenario, "scenario")?)?;
        let report = run_scenario(&spec)?;
        let json = report_json(&report);
        *out = CString::new(json).expect("JSON has no nul bytes").into_raw();
        Ok(())
    })
}

/// Releases a string returned by the library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn be_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
