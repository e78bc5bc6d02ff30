//! Covariance kernels and their Gram matrices on quadrature nodes.

use std::fmt;
use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::eigen;
use crate::error::{KleError, Result};
use crate::quadrature::{Interval, QuadratureRule};

/// User-supplied symmetric covariance function.
#[derive(Clone)]
pub struct CustomKernel {
    name: String,
    func: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl CustomKernel {
    pub fn new<F>(name: impl Into<String>, func: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        CustomKernel {
            name: name.into(),
            func: Arc::new(func),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for CustomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomKernel")
            .field("name", &self.name)
            .finish()
    }
}

/// A parametrized covariance function `c(x, y)`.
#[derive(Debug, Clone)]
pub enum KernelSpec {
    /// `sigma^2 exp(-|x - y| / ell)`.
    Exponential {
        sigma: f64,
        ell: f64,
    },
    /// `sigma^2` everywhere; a rank-one operator.
    Constant {
        sigma: f64,
    },
    /// `min(x, y)`, the Brownian-motion covariance. Its eigenpairs are known in
    /// closed form on `[0, 1]`, which makes it a test fixture for the solver.
    BrownianMin,
    Custom(CustomKernel),
}

/// JSON form of the built-in kernels, e.g.
/// `{"kernel": "exponential", "sigma": 1.0, "ell": 0.0625}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Exponential { sigma: f64, ell: f64 },
    Constant { sigma: f64 },
    BrownianMin {},
}

impl KernelSpec {
    pub fn exponential(sigma: f64, ell: f64) -> Result<Self> {
        check_positive("sigma", sigma)?;
        check_positive("ell", ell)?;
        Ok(KernelSpec::Exponential { sigma, ell })
    }

    pub fn constant(sigma: f64) -> Result<Self> {
        check_positive("sigma", sigma)?;
        Ok(KernelSpec::Constant { sigma })
    }

    pub fn custom<F>(name: impl Into<String>, func: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        KernelSpec::Custom(CustomKernel::new(name, func))
    }

    pub fn from_config(config: &KernelConfig) -> Result<Self> {
        match *config {
            KernelConfig::Exponential { sigma, ell } => Self::exponential(sigma, ell),
            KernelConfig::Constant { sigma } => Self::constant(sigma),
            KernelConfig::BrownianMin {} => Ok(KernelSpec::BrownianMin),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: KernelConfig = serde_json::from_str(text)?;
        Self::from_config(&config)
    }

    /// `None` for custom kernels, which have no serialized form.
    pub fn to_config(&self) -> Option<KernelConfig> {
        match *self {
            KernelSpec::Exponential { sigma, ell } => {
                Some(KernelConfig::Exponential { sigma, ell })
            }
            KernelSpec::Constant { sigma } => Some(KernelConfig::Constant { sigma }),
            KernelSpec::BrownianMin => Some(KernelConfig::BrownianMin {}),
            KernelSpec::Custom(_) => None,
        }
    }

    /// Metadata description; custom kernels are recorded by name.
    pub fn describe(&self) -> serde_json::Value {
        match self {
            KernelSpec::Custom(k) => serde_json::json!({"kernel": "custom", "name": k.name}),
            other => serde_json::to_value(other.to_config()).unwrap_or(serde_json::Value::Null),
        }
    }

    /// Raw kernel value without domain checks.
    #[inline]
    pub fn value(&self, x: f64, y: f64) -> f64 {
        match self {
            KernelSpec::Exponential { sigma, ell } => sigma * sigma * (-(x - y).abs() / ell).exp(),
            KernelSpec::Constant { sigma } => sigma * sigma,
            KernelSpec::BrownianMin => x.min(y),
            KernelSpec::Custom(k) => (k.func)(x, y),
        }
    }

    /// Evaluates `c(x, y)` for points in `domain`.
    pub fn eval(&self, domain: &Interval, x: f64, y: f64) -> Result<f64> {
        domain.check(x)?;
        domain.check(y)?;
        if matches!(self, KernelSpec::BrownianMin) && (x < 0.0 || y < 0.0) {
            return Err(KleError::invalid(format!(
                "the min kernel is defined for nonnegative points, got ({x}, {y})"
            )));
        }
        let v = self.value(x, y);
        if !v.is_finite() {
            return Err(KleError::numeric(format!(
                "c({x}, {y}) = {v} is not finite"
            )));
        }
        Ok(v)
    }

    /// Pointwise variance `c(x, x)`.
    pub fn diagonal(&self, x: f64) -> f64 {
        self.value(x, x)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(KleError::config(
            name,
            format!("must be a positive finite number, got {v}"),
        ))
    }
}

/// `C_kl = c(x_k, x_l)` on the nodes of a rule.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    rule: QuadratureRule,
    entries: Mat<f64>,
}

impl KernelMatrix {
    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn entries(&self) -> &Mat<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> Mat<f64> {
        self.entries
    }

    /// `W^{1/2} C W^{1/2}`, the symmetric form of the Nystrom operator.
    pub fn weighted(&self) -> Mat<f64> {
        let sqrt_w: Vec<f64> = self.rule.weights().iter().map(|w| w.sqrt()).collect();
        let n = sqrt_w.len();
        Mat::from_fn(n, n, |k, l| sqrt_w[k] * self.entries[(k, l)] * sqrt_w[l])
    }
}

/// Assembles the kernel matrix by filling the upper triangle and mirroring.
pub fn kernel_matrix(spec: &KernelSpec, rule: &QuadratureRule) -> Result<KernelMatrix> {
    let nodes = rule.nodes();
    let domain = rule.interval();
    let n = nodes.len();
    let mut entries = Mat::<f64>::zeros(n, n);
    for k in 0..n {
        for l in k..n {
            let v = spec.eval(&domain, nodes[k], nodes[l])?;
            entries[(k, l)] = v;
            entries[(l, k)] = v;
        }
    }
    Ok(KernelMatrix {
        rule: rule.clone(),
        entries,
    })
}

/// Outcome of a numerical positivity check on the discretized operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Admissibility {
    pub passed: bool,
    pub min_eigenvalue: f64,
}

/// Checks that `W^{1/2} C W^{1/2}` has no eigenvalue below `-tol`.
///
/// Only semidefiniteness is tested; zero eigenvalues pass.
pub fn admissibility_check(
    spec: &KernelSpec,
    rule: &QuadratureRule,
    tol: f64,
) -> Result<Admissibility> {
    if tol.is_nan() || tol < 0.0 {
        return Err(KleError::invalid(format!(
            "tolerance must be >= 0, got {tol}"
        )));
    }
    let km = kernel_matrix(spec, rule)?;
    let values = eigen::symmetric_eigenvalues(km.weighted().as_ref())?;
    let min_eigenvalue = values.last().copied().unwrap_or(0.0);
    Ok(Admissibility {
        passed: min_eigenvalue >= -tol,
        min_eigenvalue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_rule(n: usize) -> QuadratureRule {
        QuadratureRule::trapezoid(Interval::unit(), n).unwrap()
    }

    #[test]
    fn exponential_values() {
        let k = KernelSpec::exponential(1.0, 1.0).unwrap();
        let d = Interval::unit();
        assert_eq!(k.eval(&d, 0.25, 0.25).unwrap(), 1.0);
        assert!((k.eval(&d, 0.25, 1.0).unwrap() - (-0.75f64).exp()).abs() < 1e-15);
        assert!((k.eval(&d, 0.25, 1.0).unwrap() - 0.472367).abs() < 1e-6);
    }

    #[test]
    fn brownian_min_value() {
        let d = Interval::unit();
        assert_eq!(KernelSpec::BrownianMin.eval(&d, 0.3, 0.7).unwrap(), 0.3);
    }

    #[test]
    fn out_of_domain_rejected() {
        let k = KernelSpec::exponential(1.0, 1.0).unwrap();
        assert!(matches!(
            k.eval(&Interval::unit(), 0.5, 1.5),
            Err(KleError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(KernelSpec::exponential(0.0, 1.0).is_err());
        assert!(KernelSpec::exponential(1.0, -1.0).is_err());
        assert!(KernelSpec::constant(f64::NAN).is_err());
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let k = KernelSpec::from_json(r#"{"kernel": "exponential", "sigma": 1.0, "ell": 0.0625}"#)
            .unwrap();
        assert!(
            matches!(k, KernelSpec::Exponential { sigma, ell } if sigma == 1.0 && ell == 0.0625)
        );
        let text = serde_json::to_string(&k.to_config().unwrap()).unwrap();
        assert_eq!(
            KernelSpec::from_json(&text).unwrap().to_config(),
            k.to_config()
        );
        assert!(KernelSpec::from_json(r#"{"kernel": "brownian_min"}"#).is_ok());
        assert!(
            KernelSpec::from_json(r#"{"kernel": "constant", "sigma": 1.0, "ell": 2.0}"#).is_err()
        );
        assert!(KernelSpec::from_json(r#"{"kernel": "matern", "sigma": 1.0}"#).is_err());
    }

    #[test]
    fn constant_matrix_is_all_ones() {
        let km = kernel_matrix(&KernelSpec::constant(1.0).unwrap(), &unit_rule(3)).unwrap();
        for k in 0..3 {
            for l in 0..3 {
                assert_eq!(km.entries()[(k, l)], 1.0);
            }
        }
    }

    #[test]
    fn exponential_two_node_matrix() {
        let km = kernel_matrix(&KernelSpec::exponential(1.0, 1.0).unwrap(), &unit_rule(2)).unwrap();
        let e = (-1.0f64).exp();
        assert_eq!(km.entries()[(0, 0)], 1.0);
        assert_eq!(km.entries()[(1, 1)], 1.0);
        assert!((km.entries()[(0, 1)] - e).abs() < 1e-16);
        assert_eq!(km.entries()[(0, 1)], km.entries()[(1, 0)]);
    }

    #[test]
    fn custom_matrix_exactly_symmetric() {
        // only approximately symmetric as a function; the assembled matrix must still be exact
        let k = KernelSpec::custom("wobbly", |x, y| {
            (x * 1.3 + y * 0.7).cos() + (x * 0.7 + y * 1.3).cos()
        });
        let km = kernel_matrix(&k, &unit_rule(17)).unwrap();
        let c = km.entries();
        for i in 0..17 {
            for j in 0..17 {
                assert_eq!(c[(i, j)], c[(j, i)]);
            }
        }
    }

    #[test]
    fn admissibility_exponential_passes() {
        let a = admissibility_check(
            &KernelSpec::exponential(1.0, 1.0).unwrap(),
            &unit_rule(50),
            1e-10,
        )
        .unwrap();
        assert!(a.passed);
        assert!(a.min_eigenvalue > 0.0);
    }

    #[test]
    fn admissibility_negative_fails() {
        let a = admissibility_check(
            &KernelSpec::custom("neg", |_, _| -1.0),
            &unit_rule(10),
            1e-10,
        )
        .unwrap();
        assert!(!a.passed);
        assert!((a.min_eigenvalue + 1.0).abs() < 1e-12);
    }

    #[test]
    fn admissibility_constant_rank_one() {
        let a = admissibility_check(&KernelSpec::constant(1.0).unwrap(), &unit_rule(20), 1e-10)
            .unwrap();
        assert!(a.passed);
        assert!(a.min_eigenvalue.abs() < 1e-14);
    }

    #[test]
    fn correlation_grows_with_ell() {
        let d = Interval::unit();
        let mut prev = 0.0;
        for ell in [1.0 / 16.0, 1.0 / 8.0, 0.25, 0.5, 1.0] {
            let c = KernelSpec::exponential(2.0, ell)
                .unwrap()
                .eval(&d, 0.25, 0.6)
                .unwrap()
                / 4.0;
            assert!(c > prev);
            prev = c;
        }
    }

    proptest! {
        #[test]
        fn builtins_symmetric_and_cauchy_schwarz(
            x in 0.0f64..=1.0, y in 0.0f64..=1.0,
            sigma in 0.1f64..3.0, ell in 0.01f64..5.0,
        ) {
            let d = Interval::unit();
            for k in [
                KernelSpec::exponential(sigma, ell).unwrap(),
                KernelSpec::constant(sigma).unwrap(),
                KernelSpec::BrownianMin,
            ] {
                let cxy = k.eval(&d, x, y).unwrap();
                prop_assert!((cxy - k.eval(&d, y, x).unwrap()).abs() <= 1e-14);
                let bound = (k.diagonal(x) * k.diagonal(y)).sqrt();
                prop_assert!(cxy.abs() <= bound * (1.0 + 1e-14));
            }
            prop_assert_eq!(KernelSpec::exponential(sigma, ell).unwrap().diagonal(x), sigma * sigma);
        }

        #[test]
        fn exponential_decreases_with_distance(
            x0 in 0.0f64..=1.0, d1 in 0.0f64..0.5, extra in 1e-3f64..0.5, ell in 0.05f64..2.0,
        ) {
            let k = KernelSpec::exponential(1.0, ell).unwrap();
            prop_assert!(k.value(x0, x0 + d1) > k.value(x0, x0 + d1 + extra));
        }
    }
}
