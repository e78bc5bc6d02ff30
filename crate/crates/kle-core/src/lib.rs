//! Truncated Karhunen-Loeve expansions of second-order random fields on an
//! interval.
//!
//! The covariance operator `(C u)(x) = integral c(x, y) u(y) dy` is discretized
//! with a quadrature rule (Nystrom's method) and its leading eigenpairs give
//! the expansion
//!
//! ```text
//! Z(x, w) = zbar(x) + sum_{i <= r} sqrt(lambda_i) xi_i(w) v_i(x)
//! ```
//!
//! which for Gaussian fields has i.i.d. standard normal `xi_i`.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`quadrature`] | trapezoid and Gauss-Legendre rules |
//! | [`kernels`] | covariance functions, Gram matrices, positivity check |
//! | [`eigen`] | symmetric eigensolver, Nystrom eigenpairs and extension |
//! | [`discrete_kle`] | expansions of random vectors, rank selection, Ky Fan gap |
//! | [`field`] | truncated field expansions, seeded sampling, log-normal transform |
//! | [`diagnostics`] | Mercer residual, trace identity, optimality gap, studies |
//! | [`cli`] | configuration and the commands behind the `kle` binary |
//!
//! ```
//! use std::sync::Arc;
//! use kle_core::{build_truncated_kle, sample, Interval, KernelSpec, MeanFunction,
//!                QuadratureRule, Selection};
//!
//! let rule = QuadratureRule::trapezoid(Interval::unit(), 200).unwrap();
//! let spec = KernelSpec::exponential(1.0, 1.0).unwrap();
//! let kle = build_truncated_kle(&spec, &rule, MeanFunction::Zero, Selection::Threshold(0.9)).unwrap();
//! assert!(kle.rho() >= 0.9);
//! let ens = sample(Arc::new(kle), 4, 42).unwrap();
//! let value = ens.evaluate(0, 0.3).unwrap();
//! assert!(value.is_finite());
//! ```

pub mod cli;
pub mod diagnostics;
pub mod discrete_kle;
pub mod eigen;
pub mod error;
pub mod field;
pub mod kernels;
pub mod quadrature;

pub use discrete_kle::{
    empirical_covariance, ky_fan_gap, select_rank, truncation_error, variance_ratio, vector_kle,
    SampleEnsemble, VectorKLE,
};
pub use eigen::{nystrom_eigen, nystrom_spectrum, solve_symmetric_eigen, SpectralDecomposition};
pub use error::{KleError, Result};
pub use field::{
    build_truncated_kle, sample, FieldEnsemble, MeanFunction, Selection, TruncatedKLE,
};
pub use kernels::{admissibility_check, kernel_matrix, KernelConfig, KernelSpec};
pub use quadrature::{Interval, QuadratureRule, RuleKind};

/// Formats a float with 17 significant digits, which round-trips exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Caps worker threads from the `KLE_THREADS` environment variable.
///
/// Has an effect only before the global thread pool is first used.
pub fn configure_threads_from_env() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var("KLE_THREADS") else {
        return Ok(None);
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        error::KleError::config(
            "KLE_THREADS",
            format!("expected a positive integer, got `{raw}`"),
        )
    })?;
    // an already-initialized pool is not an error worth surfacing
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    faer::set_global_parallelism(faer::Par::rayon(threads));
    Ok(Some(threads))
}

#[cfg(test)]
mod tests {
    use super::format_f64;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = format_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(format_f64(0.5), "5.0000000000000000e-1");
    }
}
