//! Quadrature rules on a closed interval.
//!
//! A rule's nodes and weights define the discrete inner product
//! `<f, g>_W = sum_k w_k f(x_k) g(x_k)` used throughout the crate.

use serde::{Deserialize, Serialize};

use crate::error::{KleError, Result};

/// Closed interval `[a, b]` with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    a: f64,
    b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(KleError::invalid(format!(
                "interval endpoints must be finite, got [{a}, {b}]"
            )));
        }
        if a >= b {
            return Err(KleError::invalid(format!(
                "interval requires a < b, got [{a}, {b}]"
            )));
        }
        Ok(Interval { a, b })
    }

    /// The unit interval `[0, 1]`.
    pub fn unit() -> Self {
        Interval { a: 0.0, b: 1.0 }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.a && x <= self.b
    }

    pub fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(KleError::OutOfDomain {
                x,
                a: self.a,
                b: self.b,
            })
        }
    }
}

/// Which family a rule was built from; recorded in output metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Trapezoid,
    GaussLegendre,
}

/// Nodes and positive weights on an interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureRule {
    interval: Interval,
    kind: RuleKind,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Composite trapezoid rule with `n` equispaced nodes (both endpoints included).
    pub fn trapezoid(interval: Interval, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(KleError::invalid(format!(
                "trapezoid rule needs at least 2 nodes, got {n}"
            )));
        }
        let h = interval.length() / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n)
            .map(|k| {
                if k == n - 1 {
                    interval.b
                } else {
                    interval.a + interval.length() * (k as f64 / (n - 1) as f64)
                }
            })
            .collect();
        let mut weights = vec![h; n];
        weights[0] = 0.5 * h;
        weights[n - 1] = 0.5 * h;
        Ok(QuadratureRule {
            interval,
            kind: RuleKind::Trapezoid,
            nodes,
            weights,
        })
    }

    /// Gauss-Legendre rule with `n` nodes, mapped affinely from `[-1, 1]`.
    pub fn gauss_legendre(interval: Interval, n: usize) -> Result<Self> {
        if n < 1 {
            return Err(KleError::invalid(
                "Gauss-Legendre rule needs at least 1 node",
            ));
        }
        let (ref_nodes, ref_weights) = legendre_nodes_weights(n)?;
        let half = 0.5 * interval.length();
        let mid = 0.5 * (interval.a + interval.b);
        let nodes = ref_nodes.iter().map(|t| mid + half * t).collect();
        let weights = ref_weights.iter().map(|w| half * w).collect();
        Ok(QuadratureRule {
            interval,
            kind: RuleKind::GaussLegendre,
            nodes,
            weights,
        })
    }

    /// Builds a rule from explicit data, validating every invariant.
    pub fn from_parts(
        interval: Interval,
        kind: RuleKind,
        nodes: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if nodes.len() != weights.len() {
            return Err(KleError::invalid(format!(
                "{} nodes but {} weights",
                nodes.len(),
                weights.len()
            )));
        }
        if nodes.is_empty() {
            return Err(KleError::invalid("rule has no nodes"));
        }
        if nodes.windows(2).any(|p| p[0] >= p[1]) {
            return Err(KleError::invalid("nodes must be strictly increasing"));
        }
        if let Some(&x) = nodes.iter().find(|&&x| !interval.contains(x)) {
            return Err(KleError::OutOfDomain {
                x,
                a: interval.a,
                b: interval.b,
            });
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(KleError::invalid("weights must be positive and finite"));
        }
        let total: f64 = weights.iter().sum();
        if ((total - interval.length()) / interval.length()).abs() > 1e-12 {
            return Err(KleError::invalid(format!(
                "weights sum to {total}, expected interval length {}",
                interval.length()
            )));
        }
        Ok(QuadratureRule {
            interval,
            kind,
            nodes,
            weights,
        })
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Returns `sum_k w_k f(x_k)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let fx = f(x);
            if !fx.is_finite() {
                return Err(KleError::numeric(format!(
                    "integrand is not finite at x = {x} (value {fx})"
                )));
            }
            acc += w * fx;
        }
        Ok(acc)
    }

    /// Index of `x` if it coincides with a node.
    pub fn node_index(&self, x: f64) -> Option<usize> {
        self.nodes
            .binary_search_by(|probe| probe.total_cmp(&x))
            .ok()
    }
}

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX_ITER: usize = 100;

/// Evaluates `(P_n(t), P_n'(t))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * t * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = next;
    }
    let nf = n as f64;
    let dp = nf * (t * p - p_prev) / (t * t - 1.0);
    (p, dp)
}

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
///
/// Newton iteration on `P_n` from the asymptotic guess
/// `cos(pi (i - 1/4) / (n + 1/2))`; the rule is symmetric so only half the
/// roots are computed.
fn legendre_nodes_weights(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, dp) = legendre_with_derivative(n, t);
            let step = p / dp;
            t -= step;
            if step.abs() <= NEWTON_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(KleError::numeric(format!(
                "Newton iteration for Legendre root {i} of degree {n} did not converge"
            )));
        }
        let (_, dp) = legendre_with_derivative(n, t);
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        // roots come out descending from +1
        nodes[n - 1 - i] = t;
        nodes[i] = -t;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Interval {
        Interval::unit()
    }

    #[test]
    fn interval_rejects_degenerate() {
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn trapezoid_three_nodes() {
        let rule = QuadratureRule::trapezoid(unit(), 3).unwrap();
        assert_eq!(rule.nodes(), &[0.0, 0.5, 1.0]);
        assert_eq!(rule.weights(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn trapezoid_two_nodes() {
        let rule = QuadratureRule::trapezoid(unit(), 2).unwrap();
        assert_eq!(rule.nodes(), &[0.0, 1.0]);
        assert_eq!(rule.weights(), &[0.5, 0.5]);
        assert_eq!(rule.integrate(|x| x).unwrap(), 0.5);
    }

    #[test]
    fn trapezoid_needs_two_nodes() {
        assert!(matches!(
            QuadratureRule::trapezoid(unit(), 1),
            Err(KleError::InvalidArgument(_))
        ));
    }

    #[test]
    fn gauss_one_and_two_points() {
        let iv = Interval::new(-1.0, 1.0).unwrap();
        let g1 = QuadratureRule::gauss_legendre(iv, 1).unwrap();
        assert_eq!(g1.nodes(), &[0.0]);
        assert!((g1.weights()[0] - 2.0).abs() < 1e-15);

        let g2 = QuadratureRule::gauss_legendre(iv, 2).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!((g2.nodes()[0] + s).abs() < 1e-15);
        assert!((g2.nodes()[1] - s).abs() < 1e-15);
        assert!((g2.weights()[0] - 1.0).abs() < 1e-14);
        assert!((g2.weights()[1] - 1.0).abs() < 1e-14);
        assert!(g2.integrate(|x| x * x * x).unwrap().abs() < 1e-14);
    }

    #[test]
    fn gauss_exact_on_monomials() {
        let iv = Interval::new(-1.0, 1.0).unwrap();
        for n in 1..=10 {
            let rule = QuadratureRule::gauss_legendre(iv, n).unwrap();
            for k in 0..=(2 * n - 1) {
                let exact = if k % 2 == 1 {
                    0.0
                } else {
                    2.0 / (k as f64 + 1.0)
                };
                let got = rule.integrate(|x| x.powi(k as i32)).unwrap();
                assert!(
                    (got - exact).abs() < 1e-12,
                    "n={n} k={k}: got {got}, want {exact}"
                );
            }
        }
    }

    #[test]
    fn weights_sum_to_length() {
        let iv = Interval::new(-0.5, 2.5).unwrap();
        for n in [2, 3, 17, 100, 2000] {
            for rule in [
                QuadratureRule::trapezoid(iv, n).unwrap(),
                QuadratureRule::gauss_legendre(iv, n).unwrap(),
            ] {
                let total = rule.integrate(|_| 1.0).unwrap();
                assert!(
                    ((total - 3.0) / 3.0).abs() < 1e-12,
                    "{:?} n={n}",
                    rule.kind()
                );
                assert!(rule.nodes().windows(2).all(|p| p[0] < p[1]));
                assert!(rule.nodes().iter().all(|&x| iv.contains(x)));
            }
        }
    }

    #[test]
    fn trapezoid_exp_accuracy_and_order() {
        let exact = std::f64::consts::E - 1.0;
        let rule = QuadratureRule::trapezoid(unit(), 1001).unwrap();
        assert!((rule.integrate(f64::exp).unwrap() - exact).abs() < 1e-6);

        // n counts nodes, so doubling the interval count means n -> 2n - 1
        let mut n = 17;
        let mut prev = (QuadratureRule::trapezoid(unit(), n)
            .unwrap()
            .integrate(f64::exp)
            .unwrap()
            - exact)
            .abs();
        for _ in 0..5 {
            n = 2 * n - 1;
            let err = (QuadratureRule::trapezoid(unit(), n)
                .unwrap()
                .integrate(f64::exp)
                .unwrap()
                - exact)
                .abs();
            assert!(prev / err >= 3.5, "n={n}: ratio {}", prev / err);
            prev = err;
        }
    }

    #[test]
    fn integrate_rejects_non_finite() {
        let rule = QuadratureRule::trapezoid(unit(), 3).unwrap();
        assert!(matches!(
            rule.integrate(|x| 1.0 / x),
            Err(KleError::Numeric(_))
        ));
    }

    #[test]
    fn from_parts_validates() {
        let iv = unit();
        assert!(QuadratureRule::from_parts(
            iv,
            RuleKind::Trapezoid,
            vec![0.0, 1.0],
            vec![0.5, 0.5]
        )
        .is_ok());
        assert!(QuadratureRule::from_parts(
            iv,
            RuleKind::Trapezoid,
            vec![1.0, 0.0],
            vec![0.5, 0.5]
        )
        .is_err());
        assert!(QuadratureRule::from_parts(
            iv,
            RuleKind::Trapezoid,
            vec![0.0, 1.0],
            vec![0.5, 0.4]
        )
        .is_err());
        assert!(QuadratureRule::from_parts(
            iv,
            RuleKind::Trapezoid,
            vec![0.0, 1.5],
            vec![0.5, 0.5]
        )
        .is_err());
    }

    #[test]
    fn node_lookup() {
        let rule = QuadratureRule::trapezoid(unit(), 5).unwrap();
        assert_eq!(rule.node_index(0.75), Some(3));
        assert_eq!(rule.node_index(0.3), None);
    }
}
