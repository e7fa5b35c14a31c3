//! C ABI over `quickpcr`.
//!
//! Objects cross the boundary as opaque handles created by `qp_*_new` /
//! `qp_*_load` and released with the matching `qp_*_free`. Every fallible
//! function returns a [`QpStatus`]; on failure the message is kept per thread
//! and read back with [`qp_last_error_message`]. Panics are caught at the
//! boundary and reported as [`QpStatus::Panic`].
//!
//! Vectors are caller-owned `double` buffers with an explicit length. Handles
//! are not thread-safe; an oracle must not be used from two threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use quickpcr::datagen::{gen_random_a, load_dataset, SynthSpec};
use quickpcr::pcp::{quick_pcp, PcpParams};
use quickpcr::pcr::{quick_pcr, PcrParams};
use quickpcr::ridge::{DataMatrix, OracleKind, RidgeOracle, RidgeSolver};
use quickpcr::signpoly::{build_sign_poly, SignPoly};
use quickpcr::{Error, ErrorClass};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    NotConverged = 5,
    Panic = 7,
}

/// Ridge solver backing a [`QpOracle`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpOracleKind {
    /// Conjugate gradient to relative solution error `eps`.
    Cg = 0,
    /// Tight solve plus uniform noise `10^-param`; `param < 0` adds none.
    Noisy = 1,
    /// SVRG with `param` passes and declared accuracy `eps`.
    Svrg = 2,
}

/// Data matrix `A` (scaled so `||A|| <= 1`) and response `b`.
pub struct QpDataset {
    matrix: Arc<DataMatrix>,
    b: DVector<f64>,
}

/// Seeded ridge oracle over a dataset's matrix. Holds its own reference to the
/// matrix, so the dataset may be freed first.
pub struct QpOracle {
    inner: RidgeOracle,
}

/// Sign-approximating polynomial.
pub struct QpSignPoly {
    inner: SignPoly,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn from_error(e: Error) -> QpStatus {
    let status = match e.class() {
        ErrorClass::Validation => QpStatus::InvalidArgument,
        ErrorClass::Io => QpStatus::Io,
        ErrorClass::Format => QpStatus::Format,
        ErrorClass::Convergence => QpStatus::NotConverged,
    };
    set_error(e.to_string());
    status
}

fn fail(status: QpStatus, msg: impl Into<String>) -> QpStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), QpStatus>) -> QpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QpStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            fail(QpStatus::Panic, format!("panic: {msg}"))
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, QpStatus>;
}

impl<T> OrStatus<T> for quickpcr::Result<T> {
    fn or_status(self) -> Result<T, QpStatus> {
        self.map_err(from_error)
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, QpStatus> {
    p.as_ref().ok_or_else(|| fail(QpStatus::NullPointer, format!("{what} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, QpStatus> {
    p.as_mut().ok_or_else(|| fail(QpStatus::NullPointer, format!("{what} is null")))
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], QpStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(QpStatus::NullPointer, format!("{what} is null")));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], QpStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(QpStatus::NullPointer, format!("{what} is null")));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<(), QpStatus> {
    if expected == got {
        Ok(())
    } else {
        Err(fail(QpStatus::InvalidArgument, format!("{what}: expected length {expected}, got {got}")))
    }
}

unsafe fn publish<T>(out: *mut *mut T, value: T) -> Result<(), QpStatus> {
    if out.is_null() {
        return Err(fail(QpStatus::NullPointer, "output handle pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes). Returns the full message length in bytes,
/// excluding the terminator; pass a null `buf` to query it.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn qp_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates a synthetic dataset with `d_prime` rows, `d` (even) columns and
/// relative eigengap `a` around `sqrt(lambda)`.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn qp_dataset_generate(
    d_prime: usize,
    d: usize,
    a: f64,
    lambda: f64,
    noise_scale: f64,
    seed: u64,
    out: *mut *mut QpDataset,
) -> QpStatus {
    guard(|| {
        let spec = SynthSpec {
            d_prime,
            d,
            a,
            lambda,
            seed,
            noise_scale,
        };
        let data = gen_random_a(&spec).or_status()?;
        publish(
            out,
            QpDataset {
                matrix: Arc::new(data.matrix),
                b: data.b,
            },
        )
    })
}

/// Loads a dataset bundle directory written by `quickpcr gen`. With `scale`
/// nonzero the matrix is rescaled to spectral norm at most 1.
///
/// # Safety
/// `dir` must be a NUL-terminated UTF-8 path; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn qp_dataset_load(dir: *const c_char, scale: i32, out: *mut *mut QpDataset) -> QpStatus {
    guard(|| {
        if dir.is_null() {
            return Err(fail(QpStatus::NullPointer, "dir is null"));
        }
        let dir = CStr::from_ptr(dir)
            .to_str()
            .map_err(|_| fail(QpStatus::InvalidArgument, "dir is not valid UTF-8"))?;
        let data = load_dataset(Path::new(dir), scale != 0).or_status()?;
        publish(
            out,
            QpDataset {
                matrix: Arc::new(data.matrix),
                b: data.b,
            },
        )
    })
}

/// Wraps a row-major `rows x cols` matrix and a length-`rows` response. The
/// matrix must already satisfy `||A|| <= 1` unless `scale` is nonzero.
///
/// # Safety
/// `a` must hold `rows * cols` doubles, `b` `rows` doubles; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn qp_dataset_from_arrays(
    rows: usize,
    cols: usize,
    a: *const f64,
    b: *const f64,
    scale: i32,
    out: *mut *mut QpDataset,
) -> QpStatus {
    guard(|| {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| fail(QpStatus::InvalidArgument, "rows * cols overflows"))?;
        let a = input(a, len, "a")?;
        let b = input(b, rows, "b")?;
        let m = DMatrix::from_row_slice(rows, cols, a);
        let matrix = if scale != 0 {
            DataMatrix::scaled_to_unit(m)
        } else {
            DataMatrix::new(m)
        }
        .or_status()?;
        publish(
            out,
            QpDataset {
                matrix: Arc::new(matrix),
                b: DVector::from_column_slice(b),
            },
        )
    })
}

/// Writes the matrix dimensions.
///
/// # Safety
/// `ds` must be a live dataset handle; `rows` and `cols` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qp_dataset_dims(ds: *const QpDataset, rows: *mut usize, cols: *mut usize) -> QpStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        *deref_mut(rows, "rows")? = ds.matrix.rows();
        *deref_mut(cols, "cols")? = ds.matrix.cols();
        Ok(())
    })
}

/// Copies `b` (length `rows`) into `out`.
///
/// # Safety
/// `ds` must be a live dataset handle; `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qp_dataset_response(ds: *const QpDataset, out: *mut f64, len: usize) -> QpStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        check_len("response", ds.b.len(), len)?;
        output(out, len, "out")?.copy_from_slice(ds.b.as_slice());
        Ok(())
    })
}

/// Writes `A^T v` (length `cols`) for `v` of length `rows`.
///
/// # Safety
/// `ds` must be a live dataset handle; buffers valid for their lengths.
#[no_mangle]
pub unsafe extern "C" fn qp_dataset_apply_t(
    ds: *const QpDataset,
    v: *const f64,
    v_len: usize,
    out: *mut f64,
    out_len: usize,
) -> QpStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        check_len("v", ds.matrix.rows(), v_len)?;
        check_len("out", ds.matrix.cols(), out_len)?;
        let r = ds.matrix.apply_t(&DVector::from_column_slice(input(v, v_len, "v")?));
        output(out, out_len, "out")?.copy_from_slice(r.as_slice());
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qp_dataset_free(ds: *mut QpDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Creates a ridge oracle for `(A^T A + lambda I)^{-1}`. `param` is the noise
/// exponent for [`QpOracleKind::Noisy`] (negative for none) or the pass count
/// for [`QpOracleKind::Svrg`]; `eps` is the CG accuracy or SVRG's declared
/// accuracy.
///
/// # Safety
/// `ds` must be a live dataset handle; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn qp_oracle_new(
    ds: *const QpDataset,
    lambda: f64,
    kind: QpOracleKind,
    param: i64,
    eps: f64,
    seed: u64,
    out: *mut *mut QpOracle,
) -> QpStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        let kind = match kind {
            QpOracleKind::Cg => OracleKind::ExactCg { eps },
            QpOracleKind::Noisy => OracleKind::Noisy {
                k: u32::try_from(param).ok(),
            },
            QpOracleKind::Svrg => {
                let passes = usize::try_from(param)
                    .map_err(|_| fail(QpStatus::InvalidArgument, "SVRG pass count must be nonnegative"))?;
                OracleKind::Svrg { passes, eps }
            }
        };
        let oracle = RidgeOracle::new(ds.matrix.clone(), lambda, kind, seed).or_status()?;
        publish(out, QpOracle { inner: oracle })
    })
}

/// Number of ridge solves made so far.
///
/// # Safety
/// `oracle` must be a live oracle handle.
#[no_mangle]
pub unsafe extern "C" fn qp_oracle_calls(oracle: *const QpOracle) -> usize {
    oracle.as_ref().map_or(0, |o| o.inner.calls())
}

/// Declared relative accuracy of each solve.
///
/// # Safety
/// `oracle` must be a live oracle handle.
#[no_mangle]
pub unsafe extern "C" fn qp_oracle_eps(oracle: *const QpOracle) -> f64 {
    oracle.as_ref().map_or(f64::NAN, |o| o.inner.eps_prime())
}

/// One ridge solve: `out = (A^T A + lambda I)^{-1} u`, both of length `cols`.
///
/// # Safety
/// `oracle` must be a live oracle handle; buffers valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qp_oracle_solve(oracle: *mut QpOracle, u: *const f64, out: *mut f64, len: usize) -> QpStatus {
    guard(|| {
        let oracle = deref_mut(oracle, "oracle")?;
        check_len("u", oracle.inner.matrix().cols(), len)?;
        let r = oracle.inner.solve(&DVector::from_column_slice(input(u, len, "u")?)).or_status()?;
        output(out, len, "out")?.copy_from_slice(r.as_slice());
        Ok(())
    })
}

/// # Safety
/// `oracle` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qp_oracle_free(oracle: *mut QpOracle) {
    if !oracle.is_null() {
        drop(Box::from_raw(oracle));
    }
}

/// Projects `chi` onto the eigenvectors of `A^T A` with eigenvalue above about
/// the oracle's `lambda`, using a degree-`n` polynomial (`2n + 1` ridge calls)
/// with eigengap `gamma`. `chi` and `out` have length `cols`.
///
/// # Safety
/// `oracle` must be a live oracle handle; buffers valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qp_quick_pcp(
    oracle: *mut QpOracle,
    gamma: f64,
    n: usize,
    chi: *const f64,
    out: *mut f64,
    len: usize,
) -> QpStatus {
    guard(|| {
        let oracle = deref_mut(oracle, "oracle")?;
        check_len("chi", oracle.inner.matrix().cols(), len)?;
        let params = PcpParams::new(oracle.inner.lambda(), gamma, n).or_status()?;
        let chi = DVector::from_column_slice(input(chi, len, "chi")?);
        let xi = quick_pcp(&mut oracle.inner, &chi, &params).or_status()?;
        output(out, len, "out")?.copy_from_slice(xi.as_slice());
        Ok(())
    })
}

/// Principal component regression of `b` (length `rows`) into `x_out`
/// (length `cols`): degree `n`, `m` reduction steps, `2n + m + 2` ridge calls.
///
/// # Safety
/// `oracle` must be a live oracle handle; buffers valid for their lengths.
#[no_mangle]
pub unsafe extern "C" fn qp_quick_pcr(
    oracle: *mut QpOracle,
    gamma: f64,
    n: usize,
    m: usize,
    b: *const f64,
    b_len: usize,
    x_out: *mut f64,
    x_len: usize,
) -> QpStatus {
    guard(|| {
        let oracle = deref_mut(oracle, "oracle")?;
        check_len("b", oracle.inner.matrix().rows(), b_len)?;
        check_len("x_out", oracle.inner.matrix().cols(), x_len)?;
        let pcp = PcpParams::new(oracle.inner.lambda(), gamma, n).or_status()?;
        let params = PcrParams::new(pcp, m).or_status()?;
        let b = DVector::from_column_slice(input(b, b_len, "b")?);
        let result = quick_pcr(&mut oracle.inner, &b, &params).or_status()?;
        output(x_out, x_len, "x_out")?.copy_from_slice(result.x.as_slice());
        Ok(())
    })
}

/// Builds a polynomial within `eps` of `sgn(x)` on `[-1, -alpha] U [alpha, 1]`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn qp_sign_poly_new(alpha: f64, eps: f64, out: *mut *mut QpSignPoly) -> QpStatus {
    guard(|| {
        let p = build_sign_poly(alpha, eps).or_status()?;
        publish(out, QpSignPoly { inner: p })
    })
}

/// Evaluates the polynomial; NaN for a null handle.
///
/// # Safety
/// `p` must be null or a live sign-polynomial handle.
#[no_mangle]
pub unsafe extern "C" fn qp_sign_poly_eval(p: *const QpSignPoly, x: f64) -> f64 {
    p.as_ref().map_or(f64::NAN, |p| p.inner.eval(x))
}

/// Total degree `2 deg(q) + 1`; 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live sign-polynomial handle.
#[no_mangle]
pub unsafe extern "C" fn qp_sign_poly_degree(p: *const QpSignPoly) -> usize {
    p.as_ref().map_or(0, |p| 2 * p.inner.degree_q() + 1)
}

/// # Safety
/// `p` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qp_sign_poly_free(p: *mut QpSignPoly) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}
