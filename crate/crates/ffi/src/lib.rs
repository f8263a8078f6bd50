//! C ABI over `pppca`. Objects cross the boundary as opaque handles that the
//! caller releases with the matching `_free` function. Every fallible call
//! returns a [`PppcaStatus`]; the message of the last failure on the calling
//! thread is available from [`pppca_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pppca::linalg::{centralized_pca, Matrix};
use pppca::protocol::{run_session, Method, ProtocolError, SessionConfig, SessionOutcome};
use pppca::transport::wire;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PppcaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    ProtocolError = 4,
    WireError = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PppcaMethod {
    He = 0,
    Ss = 1,
}

/// Session settings. The party count is the number of partitions passed
/// to [`pppca_run`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PppcaSessionOptions {
    pub method: PppcaMethod,
    pub k: usize,
    pub key_bits: u32,
    /// Nonzero admits 512-bit keys.
    pub test_keys: u8,
    /// Nonzero makes the run reproducible from `seed`.
    pub has_seed: u8,
    pub seed: u64,
}

/// Row-major matrix of finite doubles.
pub struct PppcaMatrix(Matrix);

/// Result of a session. Matrices obtained from it are borrowed and live as
/// long as the outcome.
pub struct PppcaOutcome {
    reduced: PppcaMatrix,
    transfer: PppcaMatrix,
    covariance: PppcaMatrix,
    messages: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: PppcaStatus, msg: impl Into<String>) -> PppcaStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> PppcaStatus) -> PppcaStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(PppcaStatus::Panic, "internal panic"))
}

fn protocol_status(e: &ProtocolError) -> PppcaStatus {
    match e {
        ProtocolError::Config(_) => PppcaStatus::InvalidArgument,
        ProtocolError::Data(_) => PppcaStatus::DataError,
        _ => PppcaStatus::ProtocolError,
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pppca_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Fills `out` with the library defaults: HE, k = 2, 2048-bit keys, OS
/// randomness.
///
/// # Safety
/// `out` must be NULL or point to writable memory for one options struct.
#[no_mangle]
pub unsafe extern "C" fn pppca_session_options_default(out: *mut PppcaSessionOptions) -> PppcaStatus {
    guard(|| {
        if out.is_null() {
            return fail(PppcaStatus::NullPointer, "out is NULL");
        }
        let d = SessionConfig::default();
        out.write(PppcaSessionOptions {
            method: PppcaMethod::He,
            k: d.k,
            key_bits: d.key_bits as u32,
            test_keys: 0,
            has_seed: 0,
            seed: 0,
        });
        PppcaStatus::Ok
    })
}

/// Copies `rows * cols` doubles from `data` into a new matrix.
///
/// # Safety
/// `data` must point to `rows * cols` readable doubles and `out` to a
/// writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn pppca_matrix_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut PppcaMatrix,
) -> PppcaStatus {
    guard(|| {
        if data.is_null() || out.is_null() {
            return fail(PppcaStatus::NullPointer, "data or out is NULL");
        }
        let Some(len) = rows.checked_mul(cols) else {
            return fail(PppcaStatus::InvalidArgument, "shape overflows");
        };
        let values = std::slice::from_raw_parts(data, len).to_vec();
        match Matrix::new(rows, cols, values) {
            Ok(m) => {
                out.write(Box::into_raw(Box::new(PppcaMatrix(m))));
                PppcaStatus::Ok
            }
            Err(e) => fail(PppcaStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `m` must be NULL or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn pppca_matrix_rows(m: *const PppcaMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.rows())
}

/// # Safety
/// `m` must be NULL or a live matrix handle.
#[no_mangle]
pub unsafe extern "C" fn pppca_matrix_cols(m: *const PppcaMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.cols())
}

/// Copies the entries in row-major order into `out`, which holds `len`
/// doubles; `len` must equal rows * cols.
///
/// # Safety
/// `m` must be a live matrix handle and `out` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn pppca_matrix_copy(m: *const PppcaMatrix, out: *mut f64, len: usize) -> PppcaStatus {
    guard(|| {
        let Some(m) = m.as_ref() else {
            return fail(PppcaStatus::NullPointer, "matrix is NULL");
        };
        if out.is_null() {
            return fail(PppcaStatus::NullPointer, "out is NULL");
        }
        let data = m.0.data();
        if len != data.len() {
            return fail(PppcaStatus::InvalidArgument, format!("buffer holds {len} values, matrix has {}", data.len()));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), out, len);
        PppcaStatus::Ok
    })
}

/// # Safety
/// `m` must be NULL or a handle from this library that was not freed and is
/// not owned by an outcome.
#[no_mangle]
pub unsafe extern "C" fn pppca_matrix_free(m: *mut PppcaMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Plaintext PCA of pooled rows: writes the d x k transfer matrix and the
/// n x k reduced rows.
///
/// # Safety
/// `x` must be a live matrix handle; `transfer` and `reduced` must be
/// writable handle slots.
#[no_mangle]
pub unsafe extern "C" fn pppca_centralized_pca(
    x: *const PppcaMatrix,
    k: usize,
    transfer: *mut *mut PppcaMatrix,
    reduced: *mut *mut PppcaMatrix,
) -> PppcaStatus {
    guard(|| {
        let Some(x) = x.as_ref() else {
            return fail(PppcaStatus::NullPointer, "x is NULL");
        };
        if transfer.is_null() || reduced.is_null() {
            return fail(PppcaStatus::NullPointer, "output slot is NULL");
        }
        match centralized_pca(&x.0, k) {
            Ok(fit) => {
                transfer.write(Box::into_raw(Box::new(PppcaMatrix(fit.transfer))));
                reduced.write(Box::into_raw(Box::new(PppcaMatrix(fit.reduced))));
                PppcaStatus::Ok
            }
            Err(e) => fail(PppcaStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Runs a full simulated session with one provider per partition.
///
/// # Safety
/// `opts` must point to valid options, `parts` to `n_parts` live matrix
/// handles, and `out` to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn pppca_run(
    opts: *const PppcaSessionOptions,
    parts: *const *const PppcaMatrix,
    n_parts: usize,
    out: *mut *mut PppcaOutcome,
) -> PppcaStatus {
    guard(|| {
        let Some(opts) = opts.as_ref() else {
            return fail(PppcaStatus::NullPointer, "opts is NULL");
        };
        if parts.is_null() || out.is_null() {
            return fail(PppcaStatus::NullPointer, "parts or out is NULL");
        }
        let Ok(parties) = u16::try_from(n_parts) else {
            return fail(PppcaStatus::InvalidArgument, format!("{n_parts} partitions"));
        };
        let mut data = Vec::with_capacity(n_parts);
        for p in std::slice::from_raw_parts(parts, n_parts) {
            match p.as_ref() {
                Some(m) => data.push(m.0.clone()),
                None => return fail(PppcaStatus::NullPointer, "partition handle is NULL"),
            }
        }
        let method = match opts.method {
            PppcaMethod::He => Method::He,
            PppcaMethod::Ss => Method::Ss,
        };
        let cfg = SessionConfig {
            key_bits: u64::from(opts.key_bits),
            test_keys: opts.test_keys != 0,
            seed: (opts.has_seed != 0).then_some(opts.seed),
            ..SessionConfig::new(method, parties, opts.k)
        };
        match run_session(&cfg, data) {
            Ok(o) => {
                out.write(Box::into_raw(Box::new(outcome(o))));
                PppcaStatus::Ok
            }
            Err(e) => fail(protocol_status(&e), e.to_string()),
        }
    })
}

fn outcome(o: SessionOutcome) -> PppcaOutcome {
    PppcaOutcome {
        messages: o.transcript.len(),
        reduced: PppcaMatrix(o.reduced),
        transfer: PppcaMatrix(o.transfer),
        covariance: PppcaMatrix(o.covariance),
    }
}

/// Reduced rows stacked in provider order; borrowed from `o`.
///
/// # Safety
/// `o` must be NULL or a live outcome handle.
#[no_mangle]
pub unsafe extern "C" fn pppca_outcome_reduced(o: *const PppcaOutcome) -> *const PppcaMatrix {
    o.as_ref().map_or(ptr::null(), |o| &o.reduced)
}

/// # Safety
/// `o` must be NULL or a live outcome handle.
#[no_mangle]
pub unsafe extern "C" fn pppca_outcome_transfer(o: *const PppcaOutcome) -> *const PppcaMatrix {
    o.as_ref().map_or(ptr::null(), |o| &o.transfer)
}

/// # Safety
/// `o` must be NULL or a live outcome handle.
#[no_mangle]
pub unsafe extern "C" fn pppca_outcome_covariance(o: *const PppcaOutcome) -> *const PppcaMatrix {
    o.as_ref().map_or(ptr::null(), |o| &o.covariance)
}

/// Number of messages exchanged during the session.
///
/// # Safety
/// `o` must be NULL or a live outcome handle.
#[no_mangle]
pub unsafe extern "C" fn pppca_outcome_message_count(o: *const PppcaOutcome) -> usize {
    o.as_ref().map_or(0, |o| o.messages)
}

/// # Safety
/// `o` must be NULL or a handle from [`pppca_run`] that was not freed.
#[no_mangle]
pub unsafe extern "C" fn pppca_outcome_free(o: *mut PppcaOutcome) {
    if !o.is_null() {
        drop(Box::from_raw(o));
    }
}

/// Checks that `bytes` hold exactly one well-formed protocol frame.
///
/// # Safety
/// `bytes` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn pppca_frame_validate(bytes: *const u8, len: usize) -> PppcaStatus {
    guard(|| {
        if bytes.is_null() {
            return fail(PppcaStatus::NullPointer, "bytes is NULL");
        }
        match wire::deserialize(std::slice::from_raw_parts(bytes, len)) {
            Ok(_) => PppcaStatus::Ok,
            Err(e) => fail(PppcaStatus::WireError, e.to_string()),
        }
    })
}
