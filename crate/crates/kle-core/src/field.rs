//! Truncated expansions of Gaussian random fields and their realizations.
//!
//! A realization is `Y(x) = zbar(x) + sum_{i <= r} sqrt(lambda_i) xi_i v_i(x)`
//! with i.i.d. standard normal `xi_i`. On the quadrature nodes the stored
//! eigenvectors are used directly; elsewhere the eigenfunctions are evaluated
//! by Nystrom extension.
//!
//! Sampling is reproducible: realization `j` draws its coefficients from a
//! ChaCha8 generator seeded with the ensemble seed and set to stream `j`, so
//! each row is independent of how many rows are drawn or in what order.
//! Normals come from the ziggurat sampler of `rand_distr::StandardNormal`.

use std::fmt;
use std::sync::Arc;

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrete_kle::{select_rank, variance_ratio};
use crate::eigen::{is_degenerate, nystrom_eigen, SpectralDecomposition};
use crate::error::{KleError, Result};
use crate::kernels::KernelSpec;
use crate::quadrature::QuadratureRule;

/// Largest exponent accepted by [`FieldEnsemble::log_normal`].
pub const MAX_EXPONENT: f64 = 700.0;

/// Deterministic mean function `zbar`.
#[derive(Clone, Default)]
pub enum MeanFunction {
    #[default]
    Zero,
    Constant(f64),
    /// Nodal values, linearly interpolated in between.
    Grid {
        nodes: Vec<f64>,
        values: Vec<f64>,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for MeanFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeanFunction::Zero => write!(f, "Zero"),
            MeanFunction::Constant(c) => write!(f, "Constant({c})"),
            MeanFunction::Grid { nodes, .. } => write!(f, "Grid({} nodes)", nodes.len()),
            MeanFunction::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl MeanFunction {
    pub fn grid(rule: &QuadratureRule, values: Vec<f64>) -> Result<Self> {
        if values.len() != rule.len() {
            return Err(KleError::invalid(format!(
                "grid mean has {} values for {} nodes",
                values.len(),
                rule.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KleError::invalid("grid mean values must be finite"));
        }
        Ok(MeanFunction::Grid {
            nodes: rule.nodes().to_vec(),
            values,
        })
    }

    pub fn custom<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        MeanFunction::Custom(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            MeanFunction::Zero => 0.0,
            MeanFunction::Constant(c) => *c,
            MeanFunction::Grid { nodes, values } => interpolate(nodes, values, x),
            MeanFunction::Custom(f) => f(x),
        }
    }

    pub fn describe(&self) -> serde_json::Value {
        match self {
            MeanFunction::Zero => serde_json::json!({"type": "zero"}),
            MeanFunction::Constant(c) => serde_json::json!({"type": "constant", "value": c}),
            MeanFunction::Grid { values, .. } => {
                serde_json::json!({"type": "grid", "values": values})
            }
            MeanFunction::Custom(_) => serde_json::json!({"type": "custom"}),
        }
    }
}

fn interpolate(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    let n = nodes.len();
    if n == 1 || x <= nodes[0] {
        return values[0];
    }
    if x >= nodes[n - 1] {
        return values[n - 1];
    }
    let hi = nodes.partition_point(|&t| t <= x);
    let lo = hi - 1;
    if nodes[lo] == x {
        return values[lo];
    }
    let t = (x - nodes[lo]) / (nodes[hi] - nodes[lo]);
    values[lo] + t * (values[hi] - values[lo])
}

/// How many modes to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Rank(usize),
    /// Smallest rank whose captured variance fraction reaches the threshold.
    Threshold(f64),
}

/// Rank-`r` expansion of a random field, ready for sampling.
#[derive(Debug, Clone)]
pub struct TruncatedKLE {
    dec: SpectralDecomposition,
    mean: MeanFunction,
    rho: f64,
    total_variance: f64,
}

impl TruncatedKLE {
    pub fn decomposition(&self) -> &SpectralDecomposition {
        &self.dec
    }

    pub fn rank(&self) -> usize {
        self.dec.num_modes()
    }

    pub fn lambdas(&self) -> &[f64] {
        self.dec.lambdas()
    }

    pub fn mean(&self) -> &MeanFunction {
        &self.mean
    }

    /// Fraction of `total_variance` captured by the retained modes.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `integral of c(x, x)` under the quadrature rule.
    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    pub fn rule(&self) -> &QuadratureRule {
        self.dec.rule()
    }

    /// `Var[Z^[r](x)] = sum_i lambda_i v_i(x)^2`.
    pub fn pointwise_variance(&self, x: f64) -> Result<f64> {
        self.rule().interval().check(x)?;
        if self.rank() == 0 {
            return Ok(0.0);
        }
        let values = self.mode_values(self.rank(), x)?;
        Ok(self
            .lambdas()
            .iter()
            .zip(&values)
            .map(|(l, v)| l * v * v)
            .sum())
    }

    /// `(sum_i lambda_i) / (b - a)`.
    pub fn average_variance(&self) -> f64 {
        self.lambdas().iter().sum::<f64>() / self.rule().interval().length()
    }

    /// First `r` eigenfunction values at `x`: nodal data on nodes, Nystrom
    /// extension elsewhere.
    fn mode_values(&self, r: usize, x: f64) -> Result<Vec<f64>> {
        match self.rule().node_index(x) {
            Some(k) => Ok((0..r).map(|i| self.dec.nodal(i, k)).collect()),
            None => self.dec.extend_modes(r, x),
        }
    }
}

/// Builds a truncated expansion of the centered field with covariance `spec`,
/// shifted by `mean`.
pub fn build_truncated_kle(
    spec: &KernelSpec,
    rule: &QuadratureRule,
    mean: MeanFunction,
    select: Selection,
) -> Result<TruncatedKLE> {
    let n = rule.len();
    let total_variance = rule.integrate(|x| spec.diagonal(x))?;
    let full = match select {
        Selection::Rank(r) => {
            if r > n {
                return Err(KleError::invalid(format!(
                    "rank {r} exceeds the {n} quadrature nodes; increase n"
                )));
            }
            nystrom_eigen(spec, rule, r)?
        }
        Selection::Threshold(t) => {
            if !(t > 0.0 && t <= 1.0) {
                return Err(KleError::invalid(format!(
                    "threshold must lie in (0, 1], got {t}"
                )));
            }
            nystrom_eigen(spec, rule, n)?
        }
    };
    let r = match select {
        Selection::Rank(r) => r,
        Selection::Threshold(t) => select_rank(full.lambdas(), total_variance, t)?,
    };
    let lambdas = full.lambdas();
    if let Some(i) = (0..r).find(|&i| is_degenerate(lambdas[i], lambdas[0])) {
        return Err(KleError::DegenerateMode {
            index: i,
            lambda: lambdas[i],
        });
    }
    let dec = full.truncated(r)?;
    let rho = if total_variance > 0.0 {
        variance_ratio(dec.lambdas(), total_variance, r)?
    } else {
        0.0
    };
    Ok(TruncatedKLE {
        dec,
        mean,
        rho,
        total_variance,
    })
}

/// Standard normal draws for realization `index` of ensemble `seed`.
pub fn draw_coefficients(seed: u64, index: u64, r: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    (0..r).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Realizations of a truncated expansion, stored as their coefficients.
#[derive(Debug, Clone)]
pub struct FieldEnsemble {
    kle: Arc<TruncatedKLE>,
    coeffs: Mat<f64>,
    seed: Option<u64>,
}

/// Draws `count` realizations.
pub fn sample(kle: Arc<TruncatedKLE>, count: usize, seed: u64) -> Result<FieldEnsemble> {
    if count == 0 {
        return Err(KleError::invalid("sample count must be at least 1"));
    }
    let r = kle.rank();
    let rows: Vec<Vec<f64>> = (0..count as u64)
        .into_par_iter()
        .map(|j| draw_coefficients(seed, j, r))
        .collect();
    let coeffs = Mat::from_fn(count, r, |j, i| rows[j][i]);
    Ok(FieldEnsemble {
        kle,
        coeffs,
        seed: Some(seed),
    })
}

impl FieldEnsemble {
    /// Ensemble with caller-chosen coefficients (`count x rank`).
    pub fn with_coefficients(kle: Arc<TruncatedKLE>, coeffs: Mat<f64>) -> Result<Self> {
        if coeffs.ncols() != kle.rank() {
            return Err(KleError::invalid(format!(
                "coefficient matrix has {} columns for rank {}",
                coeffs.ncols(),
                kle.rank()
            )));
        }
        if coeffs.nrows() == 0 {
            return Err(KleError::invalid(
                "an ensemble needs at least one realization",
            ));
        }
        for j in 0..coeffs.ncols() {
            for i in 0..coeffs.nrows() {
                if !coeffs[(i, j)].is_finite() {
                    return Err(KleError::invalid(format!(
                        "coefficient ({i}, {j}) is not finite"
                    )));
                }
            }
        }
        Ok(FieldEnsemble {
            kle,
            coeffs,
            seed: None,
        })
    }

    pub fn kle(&self) -> &Arc<TruncatedKLE> {
        &self.kle
    }

    /// Row `j` holds `xi_1..xi_r` of realization `j`.
    pub fn coefficients(&self) -> &Mat<f64> {
        &self.coeffs
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.nrows() == 0
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index < self.len() {
            Ok(())
        } else {
            Err(KleError::invalid(format!(
                "realization {index} out of range ({} drawn)",
                self.len()
            )))
        }
    }

    /// Value of realization `index` at `x`.
    pub fn evaluate(&self, index: usize, x: f64) -> Result<f64> {
        self.evaluate_truncated(index, self.kle.rank(), x)
    }

    /// Realization `index` using only its first `r` modes.
    pub fn evaluate_truncated(&self, index: usize, r: usize, x: f64) -> Result<f64> {
        self.check_index(index)?;
        self.check_rank(r)?;
        self.kle.rule().interval().check(x)?;
        let mut value = self.kle.mean.eval(x);
        if r > 0 {
            let modes = self.kle.mode_values(r, x)?;
            for (i, v) in modes.iter().enumerate() {
                value += self.kle.lambdas()[i].sqrt() * self.coeffs[(index, i)] * v;
            }
        }
        Ok(value)
    }

    fn check_rank(&self, r: usize) -> Result<()> {
        if r > self.kle.rank() {
            return Err(KleError::invalid(format!(
                "rank {r} exceeds the {} retained modes",
                self.kle.rank()
            )));
        }
        Ok(())
    }

    /// Realization `index` at every quadrature node, using the first `r` modes.
    pub fn nodal_truncated(&self, index: usize, r: usize) -> Result<Vec<f64>> {
        self.check_index(index)?;
        self.check_rank(r)?;
        let dec = self.kle.decomposition();
        let scaled: Vec<f64> = (0..r)
            .map(|i| dec.lambdas()[i].sqrt() * self.coeffs[(index, i)])
            .collect();
        Ok(self
            .kle
            .rule()
            .nodes()
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let mut value = self.kle.mean.eval(x);
                for (i, s) in scaled.iter().enumerate() {
                    value += s * dec.nodal(i, k);
                }
                value
            })
            .collect())
    }

    pub fn nodal(&self, index: usize) -> Result<Vec<f64>> {
        self.nodal_truncated(index, self.kle.rank())
    }

    /// All realizations on the nodes, one per row.
    pub fn nodal_matrix(&self) -> Result<Mat<f64>> {
        let rows: Vec<Vec<f64>> = (0..self.len())
            .into_par_iter()
            .map(|j| self.nodal(j))
            .collect::<Result<_>>()?;
        Ok(Mat::from_fn(self.len(), self.kle.rule().len(), |j, k| {
            rows[j][k]
        }))
    }

    /// `exp(zbar(x) + Z(x))`, the log-normal transform of realization `index`.
    pub fn log_normal(&self, index: usize, x: f64) -> Result<f64> {
        let exponent = self.evaluate(index, x)?;
        if exponent > MAX_EXPONENT {
            return Err(KleError::numeric(format!(
                "log-normal exponent {exponent} at x = {x} (realization {index}) would overflow"
            )));
        }
        Ok(exponent.exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::Interval;

    fn unit_rule(n: usize) -> QuadratureRule {
        QuadratureRule::trapezoid(Interval::unit(), n).unwrap()
    }

    fn exp_kle(n: usize, r: usize, mean: MeanFunction) -> Arc<TruncatedKLE> {
        Arc::new(
            build_truncated_kle(
                &KernelSpec::exponential(1.0, 1.0).unwrap(),
                &unit_rule(n),
                mean,
                Selection::Rank(r),
            )
            .unwrap(),
        )
    }

    #[test]
    fn grid_mean_interpolates() {
        let rule = unit_rule(3);
        let m = MeanFunction::grid(&rule, vec![0.0, 1.0, 4.0]).unwrap();
        assert_eq!(m.eval(0.5), 1.0);
        assert_eq!(m.eval(0.25), 0.5);
        assert_eq!(m.eval(0.75), 2.5);
        assert_eq!(m.eval(1.0), 4.0);
        assert!(MeanFunction::grid(&rule, vec![0.0]).is_err());
    }

    #[test]
    fn zero_coefficients_give_mean() {
        let kle = exp_kle(50, 5, MeanFunction::Constant(5f64.ln()));
        let ens = FieldEnsemble::with_coefficients(kle.clone(), Mat::zeros(1, 5)).unwrap();
        for x in [0.0, 0.13, 0.5, 1.0] {
            assert!((ens.evaluate(0, x).unwrap() - 5f64.ln()).abs() < 1e-15);
            assert!((ens.log_normal(0, x).unwrap() - 5.0).abs() < 1e-14);
        }
        let zero =
            FieldEnsemble::with_coefficients(exp_kle(50, 5, MeanFunction::Zero), Mat::zeros(1, 5))
                .unwrap();
        assert_eq!(zero.log_normal(0, 0.3).unwrap(), 1.0);
    }

    #[test]
    fn log_normal_overflow() {
        let kle = exp_kle(20, 2, MeanFunction::Constant(800.0));
        let ens = FieldEnsemble::with_coefficients(kle, Mat::zeros(1, 2)).unwrap();
        assert!(matches!(ens.log_normal(0, 0.5), Err(KleError::Numeric(_))));
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let kle = exp_kle(40, 6, MeanFunction::Zero);
        let a = sample(kle.clone(), 25, 99).unwrap();
        let b = sample(kle.clone(), 25, 99).unwrap();
        let c = sample(kle.clone(), 10, 99).unwrap();
        for j in 0..25 {
            for i in 0..6 {
                assert_eq!(
                    a.coefficients()[(j, i)].to_bits(),
                    b.coefficients()[(j, i)].to_bits()
                );
                if j < 10 {
                    assert_eq!(
                        a.coefficients()[(j, i)].to_bits(),
                        c.coefficients()[(j, i)].to_bits()
                    );
                }
            }
        }
        let d = sample(kle, 1, 100).unwrap();
        assert_ne!(a.coefficients()[(0, 0)], d.coefficients()[(0, 0)]);
    }

    #[test]
    fn sample_rejects_zero_count() {
        assert!(sample(exp_kle(20, 2, MeanFunction::Zero), 0, 1).is_err());
    }

    #[test]
    fn node_evaluation_matches_nodal_assembly() {
        let kle = exp_kle(60, 8, MeanFunction::custom(|x| x * x));
        let ens = sample(kle.clone(), 3, 5).unwrap();
        let rule = kle.rule().clone();
        let nodal = ens.nodal(2).unwrap();
        for (k, &x) in rule.nodes().iter().enumerate() {
            assert!((ens.evaluate(2, x).unwrap() - nodal[k]).abs() < 1e-10);
            // Nystrom extension reproduces the nodal data as well
            let ext: f64 = x * x
                + (0..8)
                    .map(|i| {
                        kle.lambdas()[i].sqrt()
                            * ens.coefficients()[(2, i)]
                            * kle.decomposition().extend(i, x).unwrap()
                    })
                    .sum::<f64>();
            assert!((ext - nodal[k]).abs() < 1e-10);
        }
        assert!(ens.evaluate(3, 0.5).is_err());
        assert!(ens.evaluate(0, -0.1).is_err());
    }

    #[test]
    fn constant_kernel_rank_limits() {
        let spec = KernelSpec::constant(1.0).unwrap();
        let err = build_truncated_kle(
            &spec,
            &unit_rule(30),
            MeanFunction::Zero,
            Selection::Rank(5),
        );
        assert!(matches!(
            err,
            Err(KleError::DegenerateMode { index: 1, .. })
        ));
        let one = build_truncated_kle(
            &spec,
            &unit_rule(30),
            MeanFunction::Zero,
            Selection::Rank(1),
        )
        .unwrap();
        assert!((one.rho() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn average_variance_constant() {
        let rule = QuadratureRule::trapezoid(Interval::new(0.0, 3.0).unwrap(), 31).unwrap();
        let kle = build_truncated_kle(
            &KernelSpec::constant(2.0).unwrap(),
            &rule,
            MeanFunction::Zero,
            Selection::Rank(1),
        )
        .unwrap();
        assert!((kle.lambdas()[0] - 12.0).abs() < 1e-12);
        assert!((kle.average_variance() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn full_rank_variance_recovers_diagonal() {
        let n = 40;
        let kle = exp_kle(n, n, MeanFunction::Zero);
        for &x in kle.rule().nodes() {
            assert!((kle.pointwise_variance(x).unwrap() - 1.0).abs() < 1e-10);
        }
        assert!((kle.average_variance() - 1.0).abs() < 1e-10);
        let empty = exp_kle(n, 0, MeanFunction::Zero);
        assert_eq!(empty.pointwise_variance(0.4).unwrap(), 0.0);
    }

    #[test]
    fn threshold_selection_insufficient() {
        // a coarse grid still reaches any threshold since rho is measured
        // against the quadrature trace; a threshold of 1 requires every mode
        let spec = KernelSpec::exponential(1.0, 0.05).unwrap();
        let kle = build_truncated_kle(
            &spec,
            &unit_rule(10),
            MeanFunction::Zero,
            Selection::Threshold(0.5),
        )
        .unwrap();
        assert!(kle.rho() >= 0.5);
        assert!(build_truncated_kle(
            &spec,
            &unit_rule(10),
            MeanFunction::Zero,
            Selection::Threshold(1.5)
        )
        .is_err());
    }
}
