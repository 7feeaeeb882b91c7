//! C ABI over `ocrp-core`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` or
//! sampling functions and released by the matching `*_free`. Every
//! fallible function returns an [`OcrpStatus`]; on failure a message is
//! kept per thread and can be read with [`ocrp_last_error`]. Results are
//! written through out-pointers only on success, except that copy-out
//! functions report the required length on `BUFFER_TOO_SMALL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ocrp_core::ocrp::{decrement, exact_law, sample_ocrp, sample_pdip};
use ocrp_core::pcrp::pcrp_marginals;
use ocrp_core::rng::{stream, SimRng};
use ocrp_core::{Composition, CrpParams, Error, IntervalPartition};

/// Outcome of a call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OcrpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    BufferTooSmall = 3,
    IndexOutOfRange = 4,
    BudgetExceeded = 5,
    EmptyComposition = 6,
    Internal = 7,
    Panic = 8,
}

/// Seating parameters passed by value.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OcrpParams {
    pub alpha: f64,
    pub theta1: f64,
    pub theta2: f64,
}

/// Deterministic random stream.
pub struct OcrpRng(SimRng);

/// Finite composition.
pub struct OcrpComposition(Composition);

/// Probability table over compositions, in lexicographic order.
pub struct OcrpExactLaw(Vec<(Composition, f64)>);

/// Interval partition of a finite mass.
pub struct OcrpPartition(IntervalPartition);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: OcrpStatus, msg: impl Into<String>) -> OcrpStatus {
    set_error(msg);
    status
}

fn from_core(err: Error) -> OcrpStatus {
    let status = match err {
        Error::InvalidParameter(_) | Error::Config { .. } => OcrpStatus::InvalidParameter,
        Error::BudgetExceeded { .. } => OcrpStatus::BudgetExceeded,
        Error::EmptyComposition => OcrpStatus::EmptyComposition,
        _ => OcrpStatus::Internal,
    };
    fail(status, err.to_string())
}

/// Runs `f`, turning core errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), OcrpStatus>>(f: F) -> OcrpStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OcrpStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(OcrpStatus::Panic, "panic inside the library"),
    }
}

fn core<T>(r: ocrp_core::Result<T>) -> Result<T, OcrpStatus> {
    r.map_err(from_core)
}

fn params(p: OcrpParams) -> Result<CrpParams, OcrpStatus> {
    core(CrpParams::new(p.alpha, p.theta1, p.theta2))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), OcrpStatus> {
    if p.is_null() {
        Err(fail(OcrpStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Stores `value` behind a fresh handle in `*out`.
///
/// # Safety
/// `out` must be valid for writes.
unsafe fn put_handle<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or null when the last
/// call succeeded. The string stays valid until the next call on this
/// thread.
#[no_mangle]
pub extern "C" fn ocrp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ocrp_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}

/// Creates the random stream `index` under key `seed`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ocrp_rng_new(seed: u64, index: u64, out: *mut *mut OcrpRng) -> OcrpStatus {
    guard(|| {
        non_null(out, "out")?;
        put_handle(out, OcrpRng(stream(seed, index)));
        Ok(())
    })
}

/// Releases a stream. Null is ignored.
///
/// # Safety
/// `rng` must be null or a handle from [`ocrp_rng_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ocrp_rng_free(rng: *mut OcrpRng) {
    if !rng.is_null() {
        drop(Box::from_raw(rng));
    }
}

/// Probability that the first block of a regenerative composition of `n`
/// has size `m`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ocrp_decrement(n: u64, m: u64, theta2: f64, alpha: f64, out: *mut f64) -> OcrpStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = core(decrement(n, m, theta2, alpha))?;
        Ok(())
    })
}

/// Builds a composition from `len` positive part sizes.
///
/// # Safety
/// `parts` must point to `len` readable values (it may be null when `len`
/// is 0) and `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ocrp_composition_new(
    parts: *const u64,
    len: usize,
    out: *mut *mut OcrpComposition,
) -> OcrpStatus {
    guard(|| {
        non_null(out, "out")?;
        let v = if len == 0 {
            Vec::new()
        } else {
            non_null(parts, "parts")?;
            std::slice::from_raw_parts(parts, len).to_vec()
        };
        put_handle(out, OcrpComposition(core(Composition::new(v))?));
        Ok(())
    })
}

/// Number of parts.
///
/// # Safety
/// `c` must be a live composition handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ocrp_composition_len(c: *const OcrpComposition, out: *mut usize) -> OcrpStatus {
    guard(|| {
        non_null(c, "composition")?;
        non_null(out, "out")?;
        *out = (*c).0.len();
        Ok(())
    })
}

/// Copies the parts into `buf`. Fails with `BUFFER_TOO_SMALL` when `cap`
/// is less than the number of parts; `*len` is set either way.
///
/// # Safety
/// `c` must be a live composition handle, `buf` writable for `cap` values
/// (it may be null when `cap` is 0), and `len` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ocrp_composition_parts(
    c: *const OcrpComposition,
    buf: *mut u64,
    cap: usize,
    len: *mut usize,
) -> OcrpStatus {
    guard(|| {
        non_null(c, "composition")?;
        non_null(len, "len")?;
        let parts = (*c).0.parts();
        *len = parts.len();
        if parts.len() > cap {
            return Err(fail(
                OcrpStatus::BufferTooSmall,
                format!("need room for {} parts", parts.len()),
            ));
        }
        if !parts.is_empty() {
            non_null(buf, "buf")?;
            ptr::copy_nonoverlapping(parts.as_ptr(), buf, parts.len());
        }
        Ok(())
    })
}

/// Releases a composition. Null is ignored.
///
/// # Safety
/// `c` must be null or a composition handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ocrp_composition_free(c: *mut OcrpComposition) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Seats `n` customers by the seating rule.
///
/// # Safety
/// `rng` must be a live stream handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ocrp_sample_ocrp(
    n: u64,
    p: OcrpParams,
    rng: *mut OcrpRng,
    out: *mut *mut OcrpComposition,
) -> OcrpStatus {
    guard(|| {
        non_null(rng, "rng")?;
        non_null(out, "out")?;
        let p = params(p)?;
        put_handle(out, OcrpComposition(sample_ocrp(n, &p, &mut (*rng).0)));
        Ok(())
    })
}

/// State at time `t` of the up-down restaurant started from `start`.
///
/// # Safety
/// `start` and `rng` must be live handles and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ocrp_pcrp_marginal(
    start: *const OcrpComposition,
    p: OcrpParams,
    t: f64,
    rng: *mut OcrpRng,
    out: *mut *mut OcrpComposition,
) -> OcrpStatus {
    guard(|| {
        non_null(start, "start")?;
        non_null(rng, "rng")?;
        non_null(out, "out")?;
        let p = params(p)?;
        if t.is_nan() || t < 0.0 {
            return Err(fail(OcrpStatus::InvalidParameter, "time must be non-negative"));
        }
        let mut states = core(pcrp_marginals(&(*start).0, &p, &[t], false, &mut (*rng).0))?;
        put_handle(out, OcrpComposition(states.remove(0)));
        Ok(())
    })
}

/// Exact law of the composition of `n` customers, `n <= 9`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ocrp_exact_law_new(n: u64, p: OcrpParams, out: *mut *mut OcrpExactLaw) -> OcrpStatus {
    guard(|| {
        non_null(out, "out")?;
        let law = core(exact_law(n, &params(p)?))?;
        put_handle(out, OcrpExactLaw(law.table.into_iter().collect()));
        Ok(())
    })
}

/// Number of compositions in the table.
///
/// # Safety
/// `law` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ocrp_exact_law_len(law: *const OcrpExactLaw, out: *mut usize) -> OcrpStatus {
    guard(|| {
        non_null(law, "law")?;
        non_null(out, "out")?;
        *out = (*law).0.len();
        Ok(())
    })
}

/// Entry `index`: copies its parts into `buf` (see
/// [`ocrp_composition_parts`] for the buffer contract) and writes its
/// probability to `prob`.
///
/// # Safety
/// `law` must be a live handle, `buf` writable for `cap` values, and
/// `len` and `prob` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ocrp_exact_law_entry(
    law: *const OcrpExactLaw,
    index: usize,
    buf: *mut u64,
    cap: usize,
    len: *mut usize,
    prob: *mut f64,
) -> OcrpStatus {
    guard(|| {
        non_null(law, "law")?;
        non_null(len, "len")?;
        non_null(prob, "prob")?;
        let entries = &(*law).0;
        let Some((c, p)) = entries.get(index) else {
            return Err(fail(OcrpStatus::IndexOutOfRange, format!("no entry {index}")));
        };
        *len = c.len();
        if c.len() > cap {
            return Err(fail(
                OcrpStatus::BufferTooSmall,
                format!("need room for {} parts", c.len()),
            ));
        }
        if !c.is_empty() {
            non_null(buf, "buf")?;
            ptr::copy_nonoverlapping(c.parts().as_ptr(), buf, c.len());
        }
        *prob = *p;
        Ok(())
    })
}

/// Releases a law. Null is ignored.
///
/// # Safety
/// `law` must be null or a law handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ocrp_exact_law_free(law: *mut OcrpExactLaw) {
    if !law.is_null() {
        drop(Box::from_raw(law));
    }
}

/// Unit-mass interval partition from a restaurant of `resolution`
/// customers.
///
/// # Safety
/// `rng` must be a live stream handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ocrp_sample_pdip(
    p: OcrpParams,
    resolution: u64,
    rng: *mut OcrpRng,
    out: *mut *mut OcrpPartition,
) -> OcrpStatus {
    guard(|| {
        non_null(rng, "rng")?;
        non_null(out, "out")?;
        let ip = core(sample_pdip(&params(p)?, resolution, &mut (*rng).0))?;
        put_handle(out, OcrpPartition(ip));
        Ok(())
    })
}

/// Number of blocks.
///
/// # Safety
/// `ip` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ocrp_partition_len(ip: *const OcrpPartition, out: *mut usize) -> OcrpStatus {
    guard(|| {
        non_null(ip, "partition")?;
        non_null(out, "out")?;
        *out = (*ip).0.len();
        Ok(())
    })
}

/// Copies blocks as `left, right` pairs into `buf`, which holds `cap`
/// pairs (`2 * cap` doubles). `*len` receives the number of blocks.
///
/// # Safety
/// `ip` must be a live handle, `buf` writable for `2 * cap` doubles, and
/// `len` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ocrp_partition_blocks(
    ip: *const OcrpPartition,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> OcrpStatus {
    guard(|| {
        non_null(ip, "partition")?;
        non_null(len, "len")?;
        let blocks = (*ip).0.blocks();
        *len = blocks.len();
        if blocks.len() > cap {
            return Err(fail(
                OcrpStatus::BufferTooSmall,
                format!("need room for {} blocks", blocks.len()),
            ));
        }
        if !blocks.is_empty() {
            non_null(buf, "buf")?;
            for (i, &(a, b)) in blocks.iter().enumerate() {
                *buf.add(2 * i) = a;
                *buf.add(2 * i + 1) = b;
            }
        }
        Ok(())
    })
}

/// Total mass of the partition.
///
/// # Safety
/// `ip` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ocrp_partition_mass(ip: *const OcrpPartition, out: *mut f64) -> OcrpStatus {
    guard(|| {
        non_null(ip, "partition")?;
        non_null(out, "out")?;
        *out = (*ip).0.total_mass();
        Ok(())
    })
}

/// Releases a partition. Null is ignored.
///
/// # Safety
/// `ip` must be null or a partition handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ocrp_partition_free(ip: *mut OcrpPartition) {
    if !ip.is_null() {
        drop(Box::from_raw(ip));
    }
}
