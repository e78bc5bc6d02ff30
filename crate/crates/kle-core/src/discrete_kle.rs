//! Karhunen-Loeve expansion of random vectors (principal component analysis).
//!
//! A random vector `Z` with mean `m` and covariance `C = V diag(lambda) V^T`
//! expands as `Z = m + sum_i z_i v_i` with `z_i = <Z - m, v_i>`. The
//! coefficients are uncorrelated with `E[z_i z_j] = lambda_i delta_ij`, and the
//! `r`-term truncation has mean-square error `sum_{i > r} lambda_i`.

use std::io::{Read, Write};

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};

use crate::eigen::{clip_spectrum, solve_symmetric_eigen};
use crate::error::{KleError, Result};

/// Orthonormality tolerance for user-supplied bases.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Mean vector plus eigendecomposition of a covariance matrix.
#[derive(Debug, Clone)]
pub struct VectorKLE {
    mean: Vec<f64>,
    lambdas: Vec<f64>,
    basis: Mat<f64>,
}

impl VectorKLE {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Orthonormal eigenvectors as columns.
    pub fn basis(&self) -> &Mat<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// First `r` coefficients `<z - mean, v_i>`.
    pub fn project(&self, z: &[f64], r: usize) -> Result<Vec<f64>> {
        let n = self.dim();
        if z.len() != n {
            return Err(KleError::invalid(format!(
                "vector has length {}, expected {n}",
                z.len()
            )));
        }
        if r > n {
            return Err(KleError::invalid(format!("rank {r} exceeds dimension {n}")));
        }
        let centered: Vec<f64> = z.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok((0..r)
            .map(|i| {
                let v = self.basis.col(i);
                centered.iter().enumerate().map(|(k, c)| c * v[k]).sum()
            })
            .collect())
    }

    /// `mean + sum_i coeffs_i v_i`.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if coeffs.len() > n {
            return Err(KleError::invalid(format!(
                "{} coefficients for dimension {n}",
                coeffs.len()
            )));
        }
        let mut out = self.mean.clone();
        for (i, &c) in coeffs.iter().enumerate() {
            let v = self.basis.col(i);
            for (k, o) in out.iter_mut().enumerate() {
                *o += c * v[k];
            }
        }
        Ok(out)
    }
}

/// Eigendecomposition of a symmetric positive semidefinite covariance matrix.
pub fn vector_kle(cov: MatRef<'_, f64>, mean: &[f64]) -> Result<VectorKLE> {
    if cov.nrows() != mean.len() {
        return Err(KleError::invalid(format!(
            "covariance is {}x{} but mean has length {}",
            cov.nrows(),
            cov.ncols(),
            mean.len()
        )));
    }
    let mut evd = solve_symmetric_eigen(cov)?;
    clip_spectrum(&mut evd.values).map_err(|e| match e {
        KleError::InadmissibleKernel { min_eigenvalue, .. } => KleError::invalid(format!(
            "covariance matrix is indefinite (eigenvalue {min_eigenvalue:e})"
        )),
        other => other,
    })?;
    Ok(VectorKLE {
        mean: mean.to_vec(),
        lambdas: evd.values,
        basis: evd.vectors,
    })
}

/// `sum_{i > r} lambda_i`.
pub fn truncation_error(lambdas: &[f64], r: usize) -> Result<f64> {
    if r > lambdas.len() {
        return Err(KleError::invalid(format!(
            "rank {r} exceeds the {} available eigenvalues",
            lambdas.len()
        )));
    }
    Ok(lambdas[r..].iter().sum())
}

/// Fraction `rho(r)` of `total_variance` captured by the first `r` eigenvalues,
/// clamped to `[0, 1]`.
pub fn variance_ratio(lambdas: &[f64], total_variance: f64, r: usize) -> Result<f64> {
    if !(total_variance > 0.0 && total_variance.is_finite()) {
        return Err(KleError::invalid(format!(
            "total variance must be positive, got {total_variance}"
        )));
    }
    if r > lambdas.len() {
        return Err(KleError::invalid(format!(
            "rank {r} exceeds the {} available eigenvalues",
            lambdas.len()
        )));
    }
    let captured: f64 = lambdas[..r].iter().sum();
    Ok((captured / total_variance).clamp(0.0, 1.0))
}

/// Cumulative ratios `rho(1), ..., rho(len)`, accumulated in index order.
pub fn cumulative_ratios(lambdas: &[f64], total_variance: f64) -> Result<Vec<f64>> {
    if !(total_variance > 0.0 && total_variance.is_finite()) {
        return Err(KleError::invalid(format!(
            "total variance must be positive, got {total_variance}"
        )));
    }
    let mut acc = 0.0;
    Ok(lambdas
        .iter()
        .map(|l| {
            acc += l;
            (acc / total_variance).clamp(0.0, 1.0)
        })
        .collect())
}

/// Smallest `r` with `rho(r) >= threshold`.
pub fn select_rank(lambdas: &[f64], total_variance: f64, threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(KleError::invalid(format!(
            "threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let ratios = cumulative_ratios(lambdas, total_variance)?;
    match ratios.iter().position(|&rho| rho >= threshold) {
        Some(i) => Ok(i + 1),
        None => Err(KleError::InsufficientSpectrum {
            threshold,
            achieved: ratios.last().copied().unwrap_or(0.0),
            available: lambdas.len(),
        }),
    }
}

/// Max deviation of `Q^T Q` from the identity.
pub fn orthonormality_defect(q: MatRef<'_, f64>) -> f64 {
    let r = q.ncols();
    let mut worst = 0.0f64;
    for i in 0..r {
        for j in i..r {
            let g: f64 = (0..q.nrows()).map(|k| q[(k, i)] * q[(k, j)]).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - want).abs());
        }
    }
    worst
}

/// Ky Fan gap `sum_{i <= r} lambda_i - trace(Q^T C Q)` for orthonormal `Q` (n x r).
///
/// Nonnegative up to rounding, with equality when `Q` spans a leading
/// eigenspace.
pub fn ky_fan_gap(cov: MatRef<'_, f64>, q: MatRef<'_, f64>) -> Result<f64> {
    let n = cov.nrows();
    if q.nrows() != n || q.ncols() > n {
        return Err(KleError::invalid(format!(
            "basis is {}x{}, covariance is {n}x{n}",
            q.nrows(),
            q.ncols()
        )));
    }
    let defect = orthonormality_defect(q);
    if defect > ORTHONORMAL_TOL {
        return Err(KleError::invalid(format!(
            "basis columns are not orthonormal (defect {defect:e})"
        )));
    }
    let evd = solve_symmetric_eigen(cov)?;
    let r = q.ncols();
    let top: f64 = evd.values[..r].iter().sum();
    Ok(top - quadratic_trace(cov, q, None))
}

/// `trace(Q^T W C W Q)`, with `W = I` when `weights` is `None`.
pub(crate) fn quadratic_trace(
    c: MatRef<'_, f64>,
    q: MatRef<'_, f64>,
    weights: Option<&[f64]>,
) -> f64 {
    let (n, r) = (q.nrows(), q.ncols());
    let wq = Mat::from_fn(n, r, |k, j| weights.map_or(1.0, |w| w[k]) * q[(k, j)]);
    let mut cwq = Mat::<f64>::zeros(n, r);
    matmul(cwq.as_mut(), Accum::Replace, c, wq.as_ref(), 1.0, Par::Seq);
    (0..r)
        .map(|j| (0..n).map(|k| wq[(k, j)] * cwq[(k, j)]).sum::<f64>())
        .sum()
}

/// A batch of realizations of a random vector, one per row.
#[derive(Debug, Clone)]
pub struct SampleEnsemble {
    samples: Mat<f64>,
    seed: Option<u64>,
}

impl SampleEnsemble {
    pub fn new(samples: Mat<f64>, seed: Option<u64>) -> Result<Self> {
        if samples.nrows() < 2 {
            return Err(KleError::invalid(format!(
                "an ensemble needs at least 2 samples, got {}",
                samples.nrows()
            )));
        }
        for j in 0..samples.ncols() {
            for i in 0..samples.nrows() {
                if !samples[(i, j)].is_finite() {
                    return Err(KleError::invalid(format!(
                        "sample {i} entry {j} is not finite"
                    )));
                }
            }
        }
        Ok(SampleEnsemble { samples, seed })
    }

    pub fn samples(&self) -> &Mat<f64> {
        &self.samples
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    /// CSV with header `x_1,...,x_n`, one realization per row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record((1..=self.dim()).map(|k| format!("x_{k}")))?;
        for i in 0..self.len() {
            w.write_record((0..self.dim()).map(|k| crate::format_f64(self.samples[(i, k)])))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        for (k, h) in headers.iter().enumerate() {
            if h.trim() != format!("x_{}", k + 1) {
                return Err(KleError::invalid(format!(
                    "unexpected ensemble header `{h}` in column {}",
                    k + 1
                )));
            }
        }
        let n = headers.len();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let row = record
                .iter()
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| {
                        KleError::invalid(format!("row {}: cannot parse `{s}`: {e}", i + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let samples = Mat::from_fn(rows.len(), n, |i, k| rows[i][k]);
        SampleEnsemble::new(samples, None)
    }
}

/// Sample mean and unbiased (divisor `N - 1`) sample covariance.
pub fn empirical_covariance(ensemble: &SampleEnsemble) -> (Vec<f64>, Mat<f64>) {
    let (count, n) = (ensemble.len(), ensemble.dim());
    let x = ensemble.samples();
    let mean: Vec<f64> = (0..n)
        .map(|k| (0..count).map(|i| x[(i, k)]).sum::<f64>() / count as f64)
        .collect();
    let centered = Mat::from_fn(count, n, |i, k| x[(i, k)] - mean[k]);
    let mut cov = Mat::<f64>::zeros(n, n);
    // sequential product keeps the reduction order fixed
    matmul(
        cov.as_mut(),
        Accum::Replace,
        centered.transpose(),
        centered.as_ref(),
        1.0 / (count as f64 - 1.0),
        Par::Seq,
    );
    let sym = Mat::from_fn(n, n, |i, j| 0.5 * (cov[(i, j)] + cov[(j, i)]));
    (mean, sym)
}
