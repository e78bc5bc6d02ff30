//! Nystrom discretization of the covariance eigenproblem.
//!
//! With nodes `x_k` and weights `w_k`, the integral eigenproblem becomes
//! `C W v = lambda v`. It is solved in the symmetric form
//! `W^{1/2} C W^{1/2} v~ = lambda v~` and mapped back with `v = W^{-1/2} v~`,
//! so the returned nodal vectors satisfy `v_i^T W v_j = delta_ij`.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par, Side};

use crate::error::{KleError, Result};
use crate::kernels::{kernel_matrix, KernelSpec};
use crate::quadrature::QuadratureRule;

/// Relative threshold below which an eigenvalue is treated as zero.
/// Negative eigenvalues within it are discretization noise and clipped;
/// anything more negative marks an inadmissible kernel.
pub const CLIP_RELATIVE: f64 = 1e-10;

/// Eigenvalues in descending order with orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

fn check_symmetric(a: MatRef<'_, f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(KleError::invalid(format!(
            "matrix must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let mut scale = 1.0f64;
    for j in 0..n {
        for i in 0..n {
            let v = a[(i, j)];
            if !v.is_finite() {
                return Err(KleError::invalid(format!("entry ({i}, {j}) is not finite")));
            }
            scale = scale.max(v.abs());
        }
    }
    for j in 0..n {
        for i in (j + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(KleError::invalid(format!(
                    "matrix is not symmetric at ({i}, {j}): {} vs {}",
                    a[(i, j)],
                    a[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// Flips each column so that its largest-magnitude entry is positive.
fn fix_signs(vectors: &mut Mat<f64>) {
    for j in 0..vectors.ncols() {
        let mut best = 0.0f64;
        for i in 0..vectors.nrows() {
            let v = vectors[(i, j)];
            if v.abs() > best.abs() {
                best = v;
            }
        }
        if best < 0.0 {
            for i in 0..vectors.nrows() {
                vectors[(i, j)] = -vectors[(i, j)];
            }
        }
    }
}

/// Full eigendecomposition of a symmetric matrix.
pub fn solve_symmetric_eigen(a: MatRef<'_, f64>) -> Result<SymmetricEigen> {
    check_symmetric(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(SymmetricEigen {
            values: Vec::new(),
            vectors: Mat::zeros(0, 0),
        });
    }
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| KleError::numeric(format!("symmetric eigensolver failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending order
    let values: Vec<f64> = (0..n).rev().map(|i| s[i]).collect();
    let mut vectors = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    fix_signs(&mut vectors);
    Ok(SymmetricEigen { values, vectors })
}

/// Eigenvalues only, descending.
pub fn symmetric_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    check_symmetric(a)?;
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut values = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| KleError::numeric(format!("symmetric eigensolver failed: {e:?}")))?;
    values.reverse();
    Ok(values)
}

/// Clips small negative eigenvalues in place; errors on genuinely negative ones.
pub(crate) fn clip_spectrum(values: &mut [f64]) -> Result<()> {
    let Some(&top) = values.first() else {
        return Ok(());
    };
    let threshold = CLIP_RELATIVE * top.max(0.0);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -threshold {
        return Err(KleError::InadmissibleKernel {
            min_eigenvalue: min,
            threshold,
        });
    }
    for v in values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Whether `lambda` counts as zero relative to the leading eigenvalue.
pub(crate) fn is_degenerate(lambda: f64, leading: f64) -> bool {
    lambda <= CLIP_RELATIVE * leading.max(0.0)
}

/// Leading eigenpairs of the Nystrom-discretized covariance operator.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    spec: KernelSpec,
    rule: QuadratureRule,
    lambdas: Vec<f64>,
    eigvecs: Mat<f64>,
}

impl SpectralDecomposition {
    /// Assembles a decomposition from precomputed parts.
    ///
    /// No eigen-residual check is made; use this to load stored results or to
    /// inject perturbed spectra into diagnostics.
    pub fn from_parts(
        spec: KernelSpec,
        rule: QuadratureRule,
        lambdas: Vec<f64>,
        eigvecs: Mat<f64>,
    ) -> Result<Self> {
        if eigvecs.nrows() != rule.len() || eigvecs.ncols() != lambdas.len() {
            return Err(KleError::invalid(format!(
                "eigenvector matrix is {}x{}, expected {}x{}",
                eigvecs.nrows(),
                eigvecs.ncols(),
                rule.len(),
                lambdas.len()
            )));
        }
        Ok(SpectralDecomposition {
            spec,
            rule,
            lambdas,
            eigvecs,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Column `i` holds `v_i` at the nodes.
    pub fn eigvecs(&self) -> &Mat<f64> {
        &self.eigvecs
    }

    pub fn num_modes(&self) -> usize {
        self.lambdas.len()
    }

    /// `v_i(x_k)`.
    pub fn nodal(&self, i: usize, k: usize) -> f64 {
        self.eigvecs[(k, i)]
    }

    /// Keeps only the first `m` modes.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m > self.num_modes() {
            return Err(KleError::invalid(format!(
                "cannot keep {m} modes out of {}",
                self.num_modes()
            )));
        }
        Ok(SpectralDecomposition {
            spec: self.spec.clone(),
            rule: self.rule.clone(),
            lambdas: self.lambdas[..m].to_vec(),
            eigvecs: self.eigvecs.get(.., ..m).to_owned(),
        })
    }

    fn check_mode(&self, i: usize) -> Result<f64> {
        let lambda = *self.lambdas.get(i).ok_or_else(|| {
            KleError::invalid(format!(
                "mode {i} out of range ({} modes)",
                self.num_modes()
            ))
        })?;
        if is_degenerate(lambda, self.lambdas[0]) {
            return Err(KleError::DegenerateMode { index: i, lambda });
        }
        Ok(lambda)
    }

    /// Nystrom extension `v_i(x) = lambda_i^{-1} sum_l w_l c(x, x_l) v_i(x_l)`.
    pub fn extend(&self, i: usize, x: f64) -> Result<f64> {
        let lambda = self.check_mode(i)?;
        self.rule.interval().check(x)?;
        let mut acc = 0.0;
        for (l, (&xl, &wl)) in self
            .rule
            .nodes()
            .iter()
            .zip(self.rule.weights())
            .enumerate()
        {
            acc += wl * self.spec.value(x, xl) * self.eigvecs[(l, i)];
        }
        Ok(acc / lambda)
    }

    /// Extension of the first `r` modes at `x`, sharing one kernel row.
    pub fn extend_modes(&self, r: usize, x: f64) -> Result<Vec<f64>> {
        if r > self.num_modes() {
            return Err(KleError::invalid(format!(
                "requested {r} modes out of {}",
                self.num_modes()
            )));
        }
        let lambdas: Vec<f64> = (0..r).map(|i| self.check_mode(i)).collect::<Result<_>>()?;
        self.rule.interval().check(x)?;
        let row: Vec<f64> = self
            .rule
            .nodes()
            .iter()
            .zip(self.rule.weights())
            .map(|(&xl, &wl)| wl * self.spec.value(x, xl))
            .collect();
        Ok((0..r)
            .map(|i| {
                let col = self.eigvecs.col(i);
                let dot: f64 = row.iter().enumerate().map(|(l, c)| c * col[l]).sum();
                dot / lambdas[i]
            })
            .collect())
    }

    /// `max_i || C W v_i - lambda_i v_i ||_2` over the retained modes.
    pub fn max_residual(&self) -> Result<f64> {
        let km = kernel_matrix(&self.spec, &self.rule)?;
        let w = self.rule.weights();
        let n = self.rule.len();
        let m = self.num_modes();
        let wv = Mat::from_fn(n, m, |l, i| w[l] * self.eigvecs[(l, i)]);
        let mut cwv = Mat::<f64>::zeros(n, m);
        matmul(
            cwv.as_mut(),
            Accum::Replace,
            km.entries().as_ref(),
            wv.as_ref(),
            1.0,
            Par::Seq,
        );
        let worst = (0..m)
            .map(|i| {
                (0..n)
                    .map(|k| {
                        let r = cwv[(k, i)] - self.lambdas[i] * self.eigvecs[(k, i)];
                        r * r
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0f64, f64::max);
        Ok(worst)
    }
}

/// Top `m` eigenpairs of the Nystrom-discretized operator for `spec` on `rule`.
pub fn nystrom_eigen(
    spec: &KernelSpec,
    rule: &QuadratureRule,
    m: usize,
) -> Result<SpectralDecomposition> {
    let n = rule.len();
    if m > n {
        return Err(KleError::invalid(format!(
            "requested {m} modes but the rule has only {n} nodes"
        )));
    }
    let km = kernel_matrix(spec, rule)?;
    let mut evd = solve_symmetric_eigen(km.weighted().as_ref())?;
    clip_spectrum(&mut evd.values)?;

    let inv_sqrt_w: Vec<f64> = rule.weights().iter().map(|w| 1.0 / w.sqrt()).collect();
    let eigvecs = Mat::from_fn(n, m, |k, i| inv_sqrt_w[k] * evd.vectors[(k, i)]);
    evd.values.truncate(m);
    Ok(SpectralDecomposition {
        spec: spec.clone(),
        rule: rule.clone(),
        lambdas: evd.values,
        eigvecs,
    })
}

/// All `n` discrete eigenvalues (descending, clipped) without eigenvectors.
pub fn nystrom_spectrum(spec: &KernelSpec, rule: &QuadratureRule) -> Result<Vec<f64>> {
    let km = kernel_matrix(spec, rule)?;
    let mut values = symmetric_eigenvalues(km.weighted().as_ref())?;
    clip_spectrum(&mut values)?;
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::Interval;

    fn unit_rule(n: usize) -> QuadratureRule {
        QuadratureRule::trapezoid(Interval::unit(), n).unwrap()
    }

    #[test]
    fn diagonal_matrix() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { [2.0, 1.0][i] } else { 0.0 });
        let e = solve_symmetric_eigen(a.as_ref()).unwrap();
        assert_eq!(e.values, vec![2.0, 1.0]);
        assert!((e.vectors[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((e.vectors[(1, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn swap_matrix() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { 0.0 } else { 1.0 });
        let e = solve_symmetric_eigen(a.as_ref()).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-15);
        assert!((e.values[1] + 1.0).abs() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[(0, 0)] - s).abs() < 1e-14 && (e.vectors[(1, 0)] - s).abs() < 1e-14);
        // largest entry positive: (1, -1)/sqrt2 has a tie, first maximal entry wins
        assert!((e.vectors[(0, 1)].abs() - s).abs() < 1e-14);
        assert!((e.vectors[(0, 1)] + e.vectors[(1, 1)]).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_symmetric() {
        let a = Mat::from_fn(2, 2, |i, j| (i * 2 + j) as f64);
        assert!(matches!(
            solve_symmetric_eigen(a.as_ref()),
            Err(KleError::InvalidArgument(_))
        ));
        let r = Mat::<f64>::zeros(2, 3);
        assert!(solve_symmetric_eigen(r.as_ref()).is_err());
    }

    #[test]
    fn clipping_rules() {
        let mut ok = vec![1.0, 0.5, -1e-12];
        clip_spectrum(&mut ok).unwrap();
        assert_eq!(ok[2], 0.0);
        let mut bad = vec![1.0, 0.5, -1e-6];
        assert!(matches!(
            clip_spectrum(&mut bad),
            Err(KleError::InadmissibleKernel { .. })
        ));
    }

    #[test]
    fn constant_kernel_rank_one() {
        let dec = nystrom_eigen(&KernelSpec::constant(1.0).unwrap(), &unit_rule(51), 3).unwrap();
        assert!((dec.lambdas()[0] - 1.0).abs() < 1e-13);
        assert!(dec.lambdas()[1].abs() < 1e-13);
        assert!(dec.lambdas()[2].abs() < 1e-13);
        for k in 0..51 {
            assert!((dec.nodal(0, k) - 1.0).abs() < 1e-12);
        }
        assert!((dec.extend(0, 0.337).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            dec.extend(1, 0.5),
            Err(KleError::DegenerateMode { index: 1, .. })
        ));
    }

    #[test]
    fn w_orthonormal_and_small_residual() {
        let rule = unit_rule(120);
        let dec = nystrom_eigen(&KernelSpec::exponential(1.0, 0.3).unwrap(), &rule, 12).unwrap();
        let w = rule.weights();
        for i in 0..12 {
            for j in 0..12 {
                let g: f64 = (0..120)
                    .map(|k| dec.nodal(i, k) * w[k] * dec.nodal(j, k))
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-10, "({i},{j}) {g}");
            }
        }
        assert!(dec.max_residual().unwrap() <= 1e-8 * dec.lambdas()[0].max(1.0));
        assert!(dec.lambdas().windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn extension_reproduces_nodes() {
        let rule = unit_rule(80);
        let dec = nystrom_eigen(&KernelSpec::exponential(2.0, 0.5).unwrap(), &rule, 6).unwrap();
        for &k in &[0usize, 13, 40, 79] {
            let x = rule.nodes()[k];
            let ext = dec.extend_modes(6, x).unwrap();
            for (i, e) in ext.iter().enumerate() {
                let nodal = dec.nodal(i, k);
                assert!((dec.extend(i, x).unwrap() - nodal).abs() <= 1e-10 * nodal.abs().max(1.0));
                assert!((e - nodal).abs() <= 1e-10 * nodal.abs().max(1.0));
            }
        }
        assert!(matches!(
            dec.extend(0, 1.5),
            Err(KleError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn inadmissible_kernel_errors() {
        let neg = KernelSpec::custom("neg", |x, y| if x == y { 1.0 } else { -0.9 });
        assert!(matches!(
            nystrom_eigen(&neg, &unit_rule(10), 3),
            Err(KleError::InadmissibleKernel { .. })
        ));
    }

    #[test]
    fn too_many_modes() {
        assert!(nystrom_eigen(&KernelSpec::BrownianMin, &unit_rule(5), 6).is_err());
    }

    #[test]
    fn spectrum_matches_eigenpairs() {
        let rule = unit_rule(60);
        let spec = KernelSpec::exponential(1.0, 0.2).unwrap();
        let full = nystrom_eigen(&spec, &rule, 60).unwrap();
        let vals = nystrom_spectrum(&spec, &rule).unwrap();
        for (a, b) in full.lambdas().iter().zip(&vals) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
