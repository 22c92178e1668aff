//! C ABI over `bessel_field`: opaque handles for kernels and field samples,
//! integer status codes, and a thread-local last-error message.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use bessel_field::correlation_kernels::{AccuracyFlag, KernelKind, KernelSpec};
use bessel_field::field_simulator::{sample_field, FieldGrid, FieldSample, RngStream};
use bessel_field::fredholm::{gap_probability, Interval, IntervalSet};
use bessel_field::{Error, Ordering, PathPoint};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BflStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Range = 3,
    Ordering = 4,
    Domain = 5,
    Index = 6,
    Simulation = 7,
    Starvation = 8,
    Precondition = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BflKernelKind {
    FiniteRaw = 0,
    FiniteGauged = 1,
    BesselLimit = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BflOrdering {
    TimeLike = 0,
    SpaceLike = 1,
}

/// Opaque kernel handle.
pub struct BflKernel {
    spec: KernelSpec,
}

/// Opaque field sample handle.
pub struct BflSample {
    sample: FieldSample,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> BflStatus {
    match e {
        Error::InvalidArgument(_) => BflStatus::InvalidArgument,
        Error::Range(_) => BflStatus::Range,
        Error::Ordering(_) => BflStatus::Ordering,
        Error::Domain(_) => BflStatus::Domain,
        Error::Index { .. } => BflStatus::Index,
        Error::Simulation { .. } => BflStatus::Simulation,
        Error::Starvation { .. } => BflStatus::Starvation,
        Error::Precondition(_) => BflStatus::Precondition,
    }
}

fn guard<F: FnOnce() -> Result<(), (BflStatus, String)>>(f: F) -> BflStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BflStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside bessel_field");
            BflStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (BflStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (BflStatus, String) {
    (BflStatus::NullPointer, format!("{name} is null"))
}

/// # Safety
/// `p` must be null only when `len` is 0; otherwise it must point to `len`
/// readable values.
unsafe fn view<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], (BflStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn bfl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bfl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a kernel on the path (alphas[i], times[i]), i < len. `n` is ignored
/// for the Bessel limit kernel.
///
/// # Safety
/// `alphas` and `times` must point to `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bfl_kernel_new(
    kind: BflKernelKind,
    ordering: BflOrdering,
    n: usize,
    alphas: *const u32,
    times: *const f64,
    len: usize,
    out: *mut *mut BflKernel,
) -> BflStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let alphas = view(alphas, len, "alphas")?;
        let times = view(times, len, "times")?;
        let path = alphas.iter().zip(times).map(|(&a, &t)| PathPoint::new(a, t)).collect();
        let ordering = match ordering {
            BflOrdering::TimeLike => Ordering::TimeLike,
            BflOrdering::SpaceLike => Ordering::SpaceLike,
        };
        let (kind, n) = match kind {
            BflKernelKind::FiniteRaw => (KernelKind::FiniteRaw, Some(n)),
            BflKernelKind::FiniteGauged => (KernelKind::FiniteGauged, Some(n)),
            BflKernelKind::BesselLimit => (KernelKind::BesselLimit, None),
        };
        let spec = KernelSpec::new(kind, ordering, n, path).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(BflKernel { spec }));
        Ok(())
    })
}

/// # Safety
/// `kernel` must come from `bfl_kernel_new` and not be freed twice. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn bfl_kernel_free(kernel: *mut BflKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// K(p_i, x; p_j, y). `tail_warning` (optional) receives 1 when a truncated
/// integral did not meet its tolerance.
///
/// # Safety
/// `kernel` must be a live handle; `value` must be writable; `tail_warning`
/// may be null.
#[no_mangle]
pub unsafe extern "C" fn bfl_kernel_eval(
    kernel: *const BflKernel,
    i: usize,
    x: f64,
    j: usize,
    y: f64,
    value: *mut f64,
    tail_warning: *mut i32,
) -> BflStatus {
    guard(|| {
        let k = kernel.as_ref().ok_or_else(|| null("kernel"))?;
        if value.is_null() {
            return Err(null("value"));
        }
        let v = k.spec.eval(i, x, j, y).map_err(lib_err)?;
        *value = v.value;
        if !tail_warning.is_null() {
            *tail_warning = i32::from(v.flag == AccuracyFlag::TailWarning);
        }
        Ok(())
    })
}

/// det(I − K) on the union of [lowers[m], uppers[m]] at path index
/// path_indices[m], with `order` Gauss–Legendre nodes per interval.
///
/// # Safety
/// The three arrays must hold `count` values; `kernel` must be live; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn bfl_gap_probability(
    kernel: *const BflKernel,
    path_indices: *const usize,
    lowers: *const f64,
    uppers: *const f64,
    count: usize,
    order: usize,
    out: *mut f64,
) -> BflStatus {
    guard(|| {
        let k = kernel.as_ref().ok_or_else(|| null("kernel"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let idx = view(path_indices, count, "path_indices")?;
        let lo = view(lowers, count, "lowers")?;
        let hi = view(uppers, count, "uppers")?;
        let intervals = (0..count)
            .map(|m| Interval { path_index: idx[m], lower: lo[m], upper: hi[m] })
            .collect();
        let e = IntervalSet::new(intervals).map_err(lib_err)?;
        *out = gap_probability(&k.spec, &e, order).map_err(lib_err)?;
        Ok(())
    })
}

/// Sample the field at absolute times on the (alphas × times) grid.
///
/// # Safety
/// `alphas` must hold `n_alphas` values, `times` `n_times` values; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn bfl_sample_new(
    n: usize,
    alphas: *const u32,
    n_alphas: usize,
    times: *const f64,
    n_times: usize,
    seed: u64,
    stream: u64,
    out: *mut *mut BflSample,
) -> BflStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let alphas = view(alphas, n_alphas, "alphas")?.to_vec();
        let times = view(times, n_times, "times")?.to_vec();
        let grid = FieldGrid::new(n, alphas, times).map_err(lib_err)?;
        let sample = sample_field(&grid, RngStream::new(seed, stream)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(BflSample { sample }));
        Ok(())
    })
}

/// # Safety
/// `sample` must come from `bfl_sample_new` and not be freed twice. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn bfl_sample_free(sample: *mut BflSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Copy the N ascending eigenvalues at grid position (alpha_index,
/// time_index) into `buf`, which must have room for `len` ≥ N values.
///
/// # Safety
/// `sample` must be live and `buf` must be writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn bfl_sample_eigenvalues(
    sample: *const BflSample,
    alpha_index: usize,
    time_index: usize,
    buf: *mut f64,
    len: usize,
) -> BflStatus {
    guard(|| {
        let s = sample.as_ref().ok_or_else(|| null("sample"))?;
        let grid = &s.sample.grid;
        if alpha_index >= grid.alphas.len() {
            return Err(lib_err(Error::Index { index: alpha_index, len: grid.alphas.len() }));
        }
        if time_index >= grid.times.len() {
            return Err(lib_err(Error::Index { index: time_index, len: grid.times.len() }));
        }
        let ev = s.sample.eigenvalues_at(alpha_index, time_index);
        if len < ev.len() {
            return Err((BflStatus::Range, format!("buffer holds {len} values, need {}", ev.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(ev.as_ptr(), buf, ev.len());
        Ok(())
    })
}
