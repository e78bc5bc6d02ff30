//! C ABI over `kle-core`.
//!
//! Every fallible entry point returns a [`KleStatus`]; on failure a message is
//! available from [`kle_last_error_message`] on the same thread. Objects are
//! opaque handles created by `kle_*_new`-style functions and released with
//! the matching `kle_*_free`. Panics never cross the boundary; they surface as
//! [`KleStatus::Panic`].
//!
//! The header `include/kle.h` is regenerated by the build script.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use kle_core::{
    build_truncated_kle, nystrom_eigen, sample, select_rank, FieldEnsemble, Interval, KernelSpec,
    KleError, MeanFunction, QuadratureRule, Selection, SpectralDecomposition, TruncatedKLE,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KleStatus {
    Ok = 0,
    InvalidArgument = 1,
    NumericError = 2,
    InadmissibleKernel = 3,
    DegenerateMode = 4,
    InsufficientSpectrum = 5,
    OutOfDomain = 6,
    NullPointer = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KleKernelKind {
    /// `sigma^2 exp(-|x - y| / ell)`.
    Exponential = 0,
    /// `sigma^2`.
    Constant = 1,
    /// `min(x, y)`; `sigma` and `ell` are ignored.
    BrownianMin = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KleRuleKind {
    Trapezoid = 0,
    GaussLegendre = 1,
}

/// Covariance kernel description passed by value.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct KleKernel {
    pub kind: KleKernelKind,
    pub sigma: f64,
    /// Correlation length, used by `Exponential` only.
    pub ell: f64,
}

/// Quadrature rule handle.
pub struct KleRule(QuadratureRule);

/// Eigenpairs of a discretized covariance operator.
pub struct KleDecomposition(SpectralDecomposition);

/// Truncated expansion ready for sampling.
pub struct KleTruncated(Arc<TruncatedKLE>);

/// Sampled realizations.
pub struct KleEnsemble(FieldEnsemble);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: KleStatus,
    message: String,
}

impl From<KleError> for Failure {
    fn from(e: KleError) -> Self {
        let status = match &e {
            KleError::InvalidArgument(_) | KleError::Config { .. } => KleStatus::InvalidArgument,
            KleError::OutOfDomain { .. } => KleStatus::OutOfDomain,
            KleError::InadmissibleKernel { .. } => KleStatus::InadmissibleKernel,
            KleError::DegenerateMode { .. } => KleStatus::DegenerateMode,
            KleError::InsufficientSpectrum { .. } => KleStatus::InsufficientSpectrum,
            _ => KleStatus::NumericError,
        };
        Failure {
            status,
            message: e.to_string(),
        }
    }
}

fn fail(status: KleStatus, message: impl Into<String>) -> Failure {
    Failure {
        status,
        message: message.into(),
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> KleStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            KleStatus::Ok
        }
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            KleStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(KleStatus::NullPointer, format!("{what} is null")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(KleStatus::NullPointer, format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

unsafe fn fill(out: *mut f64, len: usize, values: &[f64]) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(KleStatus::NullPointer, "output buffer is null"));
    }
    if len < values.len() {
        return Err(fail(
            KleStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

fn kernel_spec(k: &KleKernel) -> Result<KernelSpec, Failure> {
    Ok(match k.kind {
        KleKernelKind::Exponential => KernelSpec::exponential(k.sigma, k.ell)?,
        KleKernelKind::Constant => KernelSpec::constant(k.sigma)?,
        KleKernelKind::BrownianMin => KernelSpec::BrownianMin,
    })
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length in bytes
/// excluding the terminator. Returns 0 when the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn kle_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static, NUL-terminated name of a status code.
#[no_mangle]
pub extern "C" fn kle_status_name(status: KleStatus) -> *const c_char {
    let s: &'static [u8] = match status {
        KleStatus::Ok => b"ok\0",
        KleStatus::InvalidArgument => b"invalid argument\0",
        KleStatus::NumericError => b"numeric error\0",
        KleStatus::InadmissibleKernel => b"inadmissible kernel\0",
        KleStatus::DegenerateMode => b"degenerate mode\0",
        KleStatus::InsufficientSpectrum => b"insufficient spectrum\0",
        KleStatus::OutOfDomain => b"out of domain\0",
        KleStatus::NullPointer => b"null pointer\0",
        KleStatus::BufferTooSmall => b"buffer too small\0",
        KleStatus::Panic => b"panic\0",
    };
    s.as_ptr().cast()
}

/// Creates an `n`-point rule on `[a, b]`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn kle_rule_new(
    kind: KleRuleKind,
    a: f64,
    b: f64,
    n: usize,
    out: *mut *mut KleRule,
) -> KleStatus {
    guard(|| {
        let interval = Interval::new(a, b)?;
        let rule = match kind {
            KleRuleKind::Trapezoid => QuadratureRule::trapezoid(interval, n)?,
            KleRuleKind::GaussLegendre => QuadratureRule::gauss_legendre(interval, n)?,
        };
        write_out(out, Box::into_raw(Box::new(KleRule(rule))), "out")
    })
}

/// Number of nodes; 0 for a null handle.
///
/// # Safety
/// `rule` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kle_rule_len(rule: *const KleRule) -> usize {
    rule.as_ref().map_or(0, |r| r.0.len())
}

/// # Safety
/// `rule` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kle_rule_nodes(
    rule: *const KleRule,
    out: *mut f64,
    len: usize,
) -> KleStatus {
    guard(|| fill(out, len, deref(rule, "rule")?.0.nodes()))
}

/// # Safety
/// `rule` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kle_rule_weights(
    rule: *const KleRule,
    out: *mut f64,
    len: usize,
) -> KleStatus {
    guard(|| fill(out, len, deref(rule, "rule")?.0.weights()))
}

/// # Safety
/// `rule` must be null or a handle from `kle_rule_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kle_rule_free(rule: *mut KleRule) {
    if !rule.is_null() {
        drop(Box::from_raw(rule));
    }
}

/// Leading `m` eigenpairs of the Nystrom-discretized covariance operator.
///
/// # Safety
/// `kernel` and `rule` must be valid; `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn kle_nystrom_eigen(
    kernel: *const KleKernel,
    rule: *const KleRule,
    m: usize,
    out: *mut *mut KleDecomposition,
) -> KleStatus {
    guard(|| {
        let spec = kernel_spec(deref(kernel, "kernel")?)?;
        let dec = nystrom_eigen(&spec, &deref(rule, "rule")?.0, m)?;
        write_out(out, Box::into_raw(Box::new(KleDecomposition(dec))), "out")
    })
}

/// # Safety
/// `dec` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kle_decomposition_num_modes(dec: *const KleDecomposition) -> usize {
    dec.as_ref().map_or(0, |d| d.0.num_modes())
}

/// Eigenvalues in descending order.
///
/// # Safety
/// `dec` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kle_decomposition_lambdas(
    dec: *const KleDecomposition,
    out: *mut f64,
    len: usize,
) -> KleStatus {
    guard(|| fill(out, len, deref(dec, "decomposition")?.0.lambdas()))
}

/// Nystrom extension of eigenfunction `mode` (0-based) at `x`.
///
/// # Safety
/// `dec` must be a live handle; `out` must point to one double.
#[no_mangle]
pub unsafe extern "C" fn kle_decomposition_extend(
    dec: *const KleDecomposition,
    mode: usize,
    x: f64,
    out: *mut f64,
) -> KleStatus {
    guard(|| {
        let v = deref(dec, "decomposition")?.0.extend(mode, x)?;
        write_out(out, v, "out")
    })
}

/// # Safety
/// `dec` must be null or a handle from `kle_nystrom_eigen` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kle_decomposition_free(dec: *mut KleDecomposition) {
    if !dec.is_null() {
        drop(Box::from_raw(dec));
    }
}

/// Smallest rank whose cumulative eigenvalue sum reaches
/// `threshold * total_variance`.
///
/// # Safety
/// `lambdas` must point to `len` doubles; `out` to one `size_t`.
#[no_mangle]
pub unsafe extern "C" fn kle_select_rank(
    lambdas: *const f64,
    len: usize,
    total_variance: f64,
    threshold: f64,
    out: *mut usize,
) -> KleStatus {
    guard(|| {
        if lambdas.is_null() {
            return Err(fail(KleStatus::NullPointer, "lambdas is null"));
        }
        let l = std::slice::from_raw_parts(lambdas, len);
        write_out(out, select_rank(l, total_variance, threshold)?, "out")
    })
}

unsafe fn truncated(
    kernel: *const KleKernel,
    rule: *const KleRule,
    mean: f64,
    select: Selection,
    out: *mut *mut KleTruncated,
) -> KleStatus {
    guard(|| {
        let spec = kernel_spec(deref(kernel, "kernel")?)?;
        if !mean.is_finite() {
            return Err(fail(
                KleStatus::InvalidArgument,
                format!("mean must be finite, got {mean}"),
            ));
        }
        let kle = build_truncated_kle(
            &spec,
            &deref(rule, "rule")?.0,
            MeanFunction::Constant(mean),
            select,
        )?;
        write_out(
            out,
            Box::into_raw(Box::new(KleTruncated(Arc::new(kle)))),
            "out",
        )
    })
}

/// Rank-`rank` expansion with constant mean `mean`.
///
/// # Safety
/// `kernel` and `rule` must be valid; `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn kle_truncated_with_rank(
    kernel: *const KleKernel,
    rule: *const KleRule,
    mean: f64,
    rank: usize,
    out: *mut *mut KleTruncated,
) -> KleStatus {
    truncated(kernel, rule, mean, Selection::Rank(rank), out)
}

/// Expansion keeping the fewest modes that capture `threshold` of the
/// total variance.
///
/// # Safety
/// `kernel` and `rule` must be valid; `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn kle_truncated_with_threshold(
    kernel: *const KleKernel,
    rule: *const KleRule,
    mean: f64,
    threshold: f64,
    out: *mut *mut KleTruncated,
) -> KleStatus {
    truncated(kernel, rule, mean, Selection::Threshold(threshold), out)
}

/// # Safety
/// `kle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kle_truncated_rank(kle: *const KleTruncated) -> usize {
    kle.as_ref().map_or(0, |k| k.0.rank())
}

/// Captured variance fraction; NaN for a null handle.
///
/// # Safety
/// `kle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kle_truncated_rho(kle: *const KleTruncated) -> f64 {
    kle.as_ref().map_or(f64::NAN, |k| k.0.rho())
}

/// # Safety
/// `kle` must be null or a handle not yet freed. Ensembles drawn from it stay
/// valid after this call.
#[no_mangle]
pub unsafe extern "C" fn kle_truncated_free(kle: *mut KleTruncated) {
    if !kle.is_null() {
        drop(Box::from_raw(kle));
    }
}

/// Draws `count` realizations; identical `seed` gives identical draws.
///
/// # Safety
/// `kle` must be a live handle; `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn kle_sample(
    kle: *const KleTruncated,
    count: usize,
    seed: u64,
    out: *mut *mut KleEnsemble,
) -> KleStatus {
    guard(|| {
        let ens = sample(deref(kle, "kle")?.0.clone(), count, seed)?;
        write_out(out, Box::into_raw(Box::new(KleEnsemble(ens))), "out")
    })
}

/// # Safety
/// `ens` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kle_ensemble_len(ens: *const KleEnsemble) -> usize {
    ens.as_ref().map_or(0, |e| e.0.len())
}

/// Realization `index` at `x`.
///
/// # Safety
/// `ens` must be a live handle; `out` must point to one double.
#[no_mangle]
pub unsafe extern "C" fn kle_ensemble_evaluate(
    ens: *const KleEnsemble,
    index: usize,
    x: f64,
    out: *mut f64,
) -> KleStatus {
    guard(|| {
        let v = deref(ens, "ensemble")?.0.evaluate(index, x)?;
        write_out(out, v, "out")
    })
}

/// Realization `index` at every quadrature node.
///
/// # Safety
/// `ens` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kle_ensemble_nodal(
    ens: *const KleEnsemble,
    index: usize,
    out: *mut f64,
    len: usize,
) -> KleStatus {
    guard(|| {
        let values = deref(ens, "ensemble")?.0.nodal(index)?;
        fill(out, len, &values)
    })
}

/// # Safety
/// `ens` must be null or a handle from `kle_sample` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kle_ensemble_free(ens: *mut KleEnsemble) {
    if !ens.is_null() {
        drop(Box::from_raw(ens));
    }
}
