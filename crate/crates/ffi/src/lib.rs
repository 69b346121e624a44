//! C ABI for dgeofence.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Fallible calls return a
//! [`DgStatus`]; on failure, [`dg_last_error_message`] describes the error
//! for the calling thread. Strings returned through out-parameters are
//! owned by the caller and released with [`dg_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dgeofence::model::{QuadraticModel, Selection};
use dgeofence::pipeline::{discrete_model, solve_discrete, Dataset, DiscreteRequest, IngestOptions};
use dgeofence::solver::{solve_model, SolveResult, SolverKind};
use dgeofence::synth::SynthConfig;
use dgeofence::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    Io = 5,
    EmptyInput = 6,
    Infeasible = 7,
    TooManyVariables = 8,
    Json = 9,
    Panic = 10,
    Other = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgSolver {
    Exact = 0,
    Anneal = 1,
}

/// Trajectories in source units.
pub struct DgDataset {
    inner: Dataset,
}

/// A compiled quadratic model.
pub struct DgModel {
    inner: QuadraticModel,
}

/// A solved geofence.
pub struct DgResult {
    inner: SolveResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("NUL bytes were replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure(DgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_)
            | Error::DegenerateAxis { .. }
            | Error::OutOfRange { .. }
            | Error::OutsideBbox { .. }
            | Error::ShapeMismatch { .. } => DgStatus::InvalidArgument,
            Error::Parse { .. } => DgStatus::Parse,
            Error::Io(_) => DgStatus::Io,
            Error::EmptyInput => DgStatus::EmptyInput,
            Error::Infeasible(_) | Error::FixedViolation { .. } => DgStatus::Infeasible,
            Error::TooManyVariables { .. } => DgStatus::TooManyVariables,
            Error::Json(_) => DgStatus::Json,
            _ => DgStatus::Other,
        };
        Failure(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(DgStatus::Json, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(DgStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DgStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {message}"));
            DgStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Failure(DgStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = CString::new(s).map_err(|e| Failure(DgStatus::Other, e.to_string()))?.into_raw();
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn dg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses `uid,t,x,y` CSV text.
///
/// # Safety
/// `csv` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_dataset_from_csv(csv: *const c_char, has_header: bool, out: *mut *mut DgDataset) -> DgStatus {
    guard(|| {
        let text = read_str(csv, "csv")?;
        let opts = IngestOptions { has_header: Some(has_header), ..IngestOptions::default() };
        let data = dgeofence::pipeline::ingest(text.as_bytes(), &opts)?;
        write_out(out, DgDataset { inner: Dataset { data, pois: Vec::new() } })
    })
}

/// Builds a synthetic preset (`"data1"` or `"data2"`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_dataset_from_preset(name: *const c_char, out: *mut *mut DgDataset) -> DgStatus {
    guard(|| {
        let cfg = SynthConfig::preset(read_str(name, "name")?)?;
        write_out(out, DgDataset { inner: Dataset::from_synth(&cfg)? })
    })
}

/// Number of users, or 0 for null.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn dg_dataset_user_count(ds: *const DgDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.data.len())
}

/// Number of points, or 0 for null.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn dg_dataset_point_count(ds: *const DgDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.data.point_count())
}

/// Number of POIs shipped with the dataset (synthetic presets only).
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn dg_dataset_poi_count(ds: *const DgDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.pois.len())
}

/// Writes POI `index` as `(x, y)` in source units.
///
/// # Safety
/// `ds` must be a live dataset handle; `x` and `y` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dg_dataset_poi(ds: *const DgDataset, index: usize, x: *mut f64, y: *mut f64) -> DgStatus {
    guard(|| {
        let d = deref(ds, "dataset")?;
        let p = d.inner.pois.get(index).ok_or_else(|| {
            Failure(DgStatus::InvalidArgument, format!("POI index {index} out of range ({})", d.inner.pois.len()))
        })?;
        if x.is_null() || y.is_null() {
            return Err(null("x or y"));
        }
        *x = p[0];
        *y = p[1];
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dg_dataset_free(ds: *mut DgDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Compiles the model described by a JSON solve request.
///
/// # Safety
/// `ds` must be a live dataset, `request_json` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dg_model_build(ds: *const DgDataset, request_json: *const c_char, out: *mut *mut DgModel) -> DgStatus {
    guard(|| {
        let d = deref(ds, "dataset")?;
        let req: DiscreteRequest = serde_json::from_str(read_str(request_json, "request_json")?)?;
        write_out(out, DgModel { inner: discrete_model(&d.inner.data, &req)? })
    })
}

/// Number of binary variables (grid cells), or 0 for null.
///
/// # Safety
/// `m` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn dg_model_variable_count(m: *const DgModel) -> usize {
    m.as_ref().map_or(0, |m| m.inner.n())
}

/// Variables left free after fixed assignments, or 0 for null.
///
/// # Safety
/// `m` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn dg_model_free_count(m: *const DgModel) -> usize {
    m.as_ref().map_or(0, |m| m.inner.free_count())
}

/// Objective of a row-major 0/1 assignment of `len` cells.
///
/// # Safety
/// `m` must be a live model, `bits` point to `len` bytes, `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn dg_model_energy(m: *const DgModel, bits: *const u8, len: usize, out: *mut f64) -> DgStatus {
    guard(|| {
        let model = &deref(m, "model")?.inner;
        if bits.is_null() || out.is_null() {
            return Err(null("bits or out"));
        }
        if len != model.n() {
            return Err(Failure(DgStatus::InvalidArgument, format!("expected {} cells, got {len}", model.n())));
        }
        let x: Vec<bool> = std::slice::from_raw_parts(bits, len).iter().map(|&b| b != 0).collect();
        *out = model.energy(&x);
        Ok(())
    })
}

/// Linear, pairwise, constant, window and fixed terms as JSON.
///
/// # Safety
/// `m` must be a live model and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dg_model_to_json(m: *const DgModel, out: *mut *mut c_char) -> DgStatus {
    guard(|| {
        let model = &deref(m, "model")?.inner;
        write_string(out, serde_json::to_string(&model.to_export())?)
    })
}

/// Solves a compiled model.
///
/// # Safety
/// `m` must be a live model and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dg_model_solve(m: *const DgModel, solver: DgSolver, seed: u64, out: *mut *mut DgResult) -> DgStatus {
    guard(|| {
        let model = &deref(m, "model")?.inner;
        let kind = match solver {
            DgSolver::Exact => SolverKind::Exact,
            DgSolver::Anneal => SolverKind::Anneal,
        };
        write_out(out, DgResult { inner: solve_model(model, kind, seed)? })
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dg_model_free(m: *mut DgModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Runs a full JSON solve request, including the hierarchical solver.
///
/// # Safety
/// `ds` must be a live dataset, `request_json` NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dg_solve_discrete(ds: *const DgDataset, request_json: *const c_char, out: *mut *mut DgResult) -> DgStatus {
    guard(|| {
        let d = deref(ds, "dataset")?;
        let req: DiscreteRequest = serde_json::from_str(read_str(request_json, "request_json")?)?;
        write_out(out, DgResult { inner: solve_discrete(&d.inner.data, &req)?.result })
    })
}

/// Cells per grid side, or 0 for null.
///
/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn dg_result_side(r: *const DgResult) -> usize {
    r.as_ref().map_or(0, |r| r.inner.geofence.spec.side())
}

/// Number of selected cells, or 0 for null.
///
/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn dg_result_selected_count(r: *const DgResult) -> usize {
    r.as_ref().map_or(0, |r| r.inner.selection().count())
}

/// Whether the selection satisfies the window and fixed cells.
///
/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn dg_result_feasible(r: *const DgResult) -> bool {
    r.as_ref().is_some_and(|r| r.inner.feasible)
}

/// Objective value, or NaN for null.
///
/// # Safety
/// `r` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn dg_result_objective(r: *const DgResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.inner.breakdown.total)
}

/// Copies the row-major 0/1 selection into `buf`, which must hold
/// `side * side` bytes.
///
/// # Safety
/// `r` must be a live result and `buf` point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dg_result_selection(r: *const DgResult, buf: *mut u8, len: usize) -> DgStatus {
    guard(|| {
        let sel: &Selection = deref(r, "result")?.inner.selection();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < sel.bits().len() {
            return Err(Failure(DgStatus::InvalidArgument, format!("buffer holds {len} bytes, need {}", sel.bits().len())));
        }
        let dst = std::slice::from_raw_parts_mut(buf, sel.bits().len());
        for (d, &b) in dst.iter_mut().zip(sel.bits()) {
            *d = u8::from(b);
        }
        Ok(())
    })
}

/// The result in the same JSON form the CLI prints.
///
/// # Safety
/// `r` must be a live result and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn dg_result_to_json(r: *const DgResult, out: *mut *mut c_char) -> DgStatus {
    guard(|| write_string(out, serde_json::to_string(&deref(r, "result")?.inner)?))
}

/// # Safety
/// `r` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dg_result_free(r: *mut DgResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
