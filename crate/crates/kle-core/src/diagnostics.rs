//! Numerical checks of the spectral theory behind the expansion, and the
//! parameter studies that tabulate eigenvalue accuracy and correlation decay.

use std::collections::BTreeMap;
use std::io::Write;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::discrete_kle::{quadratic_trace, ORTHONORMAL_TOL};
use crate::eigen::{
    is_degenerate, nystrom_eigen, nystrom_spectrum, SpectralDecomposition, CLIP_RELATIVE,
};
use crate::error::{KleError, Result};
use crate::field::{build_truncated_kle, sample, FieldEnsemble, MeanFunction, Selection};
use crate::kernels::{admissibility_check, kernel_matrix, KernelSpec};
use crate::quadrature::{Interval, QuadratureRule, RuleKind};

/// Tabular output of a check or study.
#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub name: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub columns: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
}

impl StudyReport {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        StudyReport {
            name: name.into(),
            parameters: BTreeMap::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            pass: None,
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.parameters.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
        self
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(KleError::invalid(format!(
                "row has {} values for {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|&v| crate::format_f64(v)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Eigenfunction values at `x` for the first `m` modes. Modes with a zero
/// eigenvalue cannot be extended off-grid and are reported as zero there.
fn mode_values(dec: &SpectralDecomposition, m: usize, x: f64) -> Result<Vec<f64>> {
    if let Some(k) = dec.rule().node_index(x) {
        return Ok((0..m).map(|i| dec.nodal(i, k)).collect());
    }
    let lead = dec.lambdas()[0];
    let usable = dec.lambdas()[..m]
        .iter()
        .take_while(|&&l| !is_degenerate(l, lead))
        .count();
    let mut values = dec.extend_modes(usable, x)?;
    values.resize(m, 0.0);
    Ok(values)
}

/// Nodes plus the midpoints between consecutive nodes.
pub fn default_probe_grid(rule: &QuadratureRule) -> Vec<f64> {
    let nodes = rule.nodes();
    let mut probe = Vec::with_capacity(2 * nodes.len());
    for (k, &x) in nodes.iter().enumerate() {
        probe.push(x);
        if let Some(&next) = nodes.get(k + 1) {
            probe.push(0.5 * (x + next));
        }
    }
    probe
}

/// `max |c(x, y) - sum_{i < m} lambda_i v_i(x) v_i(y)|` over all probe pairs.
///
/// A finite probe grid only bounds the true supremum from below.
pub fn mercer_residual(dec: &SpectralDecomposition, m: usize, probe: &[f64]) -> Result<f64> {
    if m > dec.num_modes() {
        return Err(KleError::invalid(format!(
            "m = {m} exceeds the {} available modes",
            dec.num_modes()
        )));
    }
    let domain = dec.rule().interval();
    for &x in probe {
        domain.check(x)?;
    }
    let lambdas = &dec.lambdas()[..m];
    let values: Vec<Vec<f64>> = probe
        .iter()
        .map(|&x| mode_values(dec, m, x))
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for (p, &x) in probe.iter().enumerate() {
        for (q, &y) in probe.iter().enumerate().skip(p) {
            let partial: f64 = (0..m)
                .map(|i| lambdas[i] * values[p][i] * values[q][i])
                .sum();
            worst = worst.max((dec.spec().value(x, y) - partial).abs());
        }
    }
    Ok(worst)
}

/// `max_k |c(x_k, x_k) - sum_{i < m} lambda_i v_i(x_k)^2|` over the nodes.
pub fn mercer_diagonal_residual(dec: &SpectralDecomposition, m: usize) -> Result<f64> {
    if m > dec.num_modes() {
        return Err(KleError::invalid(format!(
            "m = {m} exceeds the {} available modes",
            dec.num_modes()
        )));
    }
    let mut worst = 0.0f64;
    for (k, &x) in dec.rule().nodes().iter().enumerate() {
        let partial: f64 = (0..m)
            .map(|i| dec.lambdas()[i] * dec.nodal(i, k) * dec.nodal(i, k))
            .sum();
        worst = worst.max((dec.spec().diagonal(x) - partial).abs());
    }
    Ok(worst)
}

/// Both sides of the trace identity `sum lambda_i = integral c(x, x) dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceIdentity {
    pub sum_lambdas: f64,
    pub integral: f64,
    pub abs_gap: f64,
    pub passed: bool,
}

/// Relative tolerance of the trace identity.
pub const TRACE_TOL: f64 = 1e-10;

/// Compares the eigenvalue sum of a full decomposition with the quadrature
/// of the kernel diagonal.
pub fn trace_identity_check(dec: &SpectralDecomposition) -> Result<TraceIdentity> {
    let n = dec.rule().len();
    if dec.num_modes() != n {
        return Err(KleError::invalid(format!(
            "trace identity needs all {n} modes, decomposition has {}",
            dec.num_modes()
        )));
    }
    let sum_lambdas: f64 = dec.lambdas().iter().sum();
    let integral = dec.rule().integrate(|x| dec.spec().diagonal(x))?;
    let abs_gap = (sum_lambdas - integral).abs();
    Ok(TraceIdentity {
        sum_lambdas,
        integral,
        abs_gap,
        passed: abs_gap <= TRACE_TOL * integral.abs().max(1.0),
    })
}

/// Sample moments of the standardized expansion coefficients.
#[derive(Debug, Clone)]
pub struct CoefficientStats {
    pub count: usize,
    /// `E[xi_i]`.
    pub mean: Vec<f64>,
    /// `E[xi_i xi_j]` (raw, not centered).
    pub second_moment: Mat<f64>,
}

impl CoefficientStats {
    pub fn max_mean_abs(&self) -> f64 {
        self.mean.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `max |E[xi_i xi_j] - delta_ij|`.
    pub fn max_identity_defect(&self) -> f64 {
        let r = self.mean.len();
        let mut worst = 0.0f64;
        for i in 0..r {
            for j in 0..r {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.second_moment[(i, j)] - want).abs());
            }
        }
        worst
    }
}

pub const MIN_STAT_SAMPLES: usize = 100;

pub fn coefficient_stats(ensemble: &FieldEnsemble) -> Result<CoefficientStats> {
    let count = ensemble.len();
    if count < MIN_STAT_SAMPLES {
        return Err(KleError::invalid(format!(
            "coefficient statistics need at least {MIN_STAT_SAMPLES} realizations, got {count}"
        )));
    }
    let xi = ensemble.coefficients();
    let r = xi.ncols();
    let nf = count as f64;
    let mean = (0..r)
        .map(|i| (0..count).map(|j| xi[(j, i)]).sum::<f64>() / nf)
        .collect();
    let mut second_moment = Mat::<f64>::zeros(r, r);
    for i in 0..r {
        for k in i..r {
            let s = (0..count).map(|j| xi[(j, i)] * xi[(j, k)]).sum::<f64>() / nf;
            second_moment[(i, k)] = s;
            second_moment[(k, i)] = s;
        }
    }
    Ok(CoefficientStats {
        count,
        mean,
        second_moment,
    })
}

/// Max deviation of `U^T W U` from the identity.
pub fn w_orthonormality_defect(rule: &QuadratureRule, u: &Mat<f64>) -> f64 {
    let w = rule.weights();
    let wu = Mat::from_fn(u.nrows(), u.ncols(), |k, j| w[k] * u[(k, j)]);
    let mut gram = Mat::<f64>::zeros(u.ncols(), u.ncols());
    matmul(
        gram.as_mut(),
        Accum::Replace,
        u.transpose(),
        wu.as_ref(),
        1.0,
        Par::Seq,
    );
    let mut worst = 0.0f64;
    for i in 0..u.ncols() {
        for j in i..u.ncols() {
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - want).abs());
        }
    }
    worst
}

/// Modified Gram-Schmidt in the `W` inner product, applied twice.
pub fn w_orthonormalize(rule: &QuadratureRule, cols: &Mat<f64>) -> Result<Mat<f64>> {
    let w = rule.weights();
    let n = rule.len();
    if cols.nrows() != n {
        return Err(KleError::invalid(format!(
            "basis has {} rows for {n} nodes",
            cols.nrows()
        )));
    }
    let dot = |a: &[f64], b: &[f64]| -> f64 { (0..n).map(|k| a[k] * w[k] * b[k]).sum() };
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(cols.ncols());
    for j in 0..cols.ncols() {
        let mut v: Vec<f64> = (0..n).map(|k| cols[(k, j)]).collect();
        let original = dot(&v, &v).sqrt();
        for _ in 0..2 {
            for q in &out {
                let c = dot(q, &v);
                for k in 0..n {
                    v[k] -= c * q[k];
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm.is_nan() || norm <= 1e-10 * original.max(f64::MIN_POSITIVE) {
            return Err(KleError::invalid(format!(
                "column {j} is linearly dependent on the previous ones"
            )));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        out.push(v);
    }
    Ok(Mat::from_fn(n, out.len(), |k, j| out[j][k]))
}

/// `W`-orthonormalized `1, cos(2 pi t), sin(2 pi t), cos(4 pi t), ...` with
/// `t = (x - a)/(b - a)`; first `r` functions.
pub fn fourier_basis(rule: &QuadratureRule, r: usize) -> Result<Mat<f64>> {
    let iv = rule.interval();
    let nodes = rule.nodes();
    let raw = Mat::from_fn(rule.len(), r, |k, j| {
        let t = (nodes[k] - iv.a()) / iv.length();
        let freq = std::f64::consts::TAU * j.div_ceil(2) as f64;
        match j {
            0 => 1.0,
            _ if j % 2 == 1 => (freq * t).cos(),
            _ => (freq * t).sin(),
        }
    });
    w_orthonormalize(rule, &raw)
}

/// Random `W`-orthonormal `n x r` basis from a Gaussian matrix.
pub fn random_w_orthonormal_basis(rule: &QuadratureRule, r: usize, seed: u64) -> Result<Mat<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = Mat::from_fn(rule.len(), r, |_, _| StandardNormal.sample(&mut rng));
    w_orthonormalize(rule, &raw)
}

/// `eps(U, r) - eps(V, r) = sum_{i<r} lambda_i - sum_{i<r} <C u_i, u_i>` for
/// a `W`-orthonormal alternative basis `U`.
pub fn basis_optimality_gap(dec: &SpectralDecomposition, alt: &Mat<f64>) -> Result<f64> {
    let km = kernel_matrix(dec.spec(), dec.rule())?;
    optimality_gap_with(dec, km.entries().as_ref(), alt)
}

fn optimality_gap_with(
    dec: &SpectralDecomposition,
    c: MatRef<'_, f64>,
    alt: &Mat<f64>,
) -> Result<f64> {
    let rule = dec.rule();
    let r = alt.ncols();
    if alt.nrows() != rule.len() {
        return Err(KleError::invalid(format!(
            "basis has {} rows for {} nodes",
            alt.nrows(),
            rule.len()
        )));
    }
    if r > dec.num_modes() {
        return Err(KleError::invalid(format!(
            "basis has {r} columns but only {} modes are available",
            dec.num_modes()
        )));
    }
    let defect = w_orthonormality_defect(rule, alt);
    if defect > ORTHONORMAL_TOL {
        return Err(KleError::invalid(format!(
            "basis is not W-orthonormal (defect {defect:e})"
        )));
    }
    let captured = quadratic_trace(c, alt.as_ref(), Some(rule.weights()));
    Ok(dec.lambdas()[..r].iter().sum::<f64>() - captured)
}

fn build_rule(kind: RuleKind, interval: Interval, n: usize) -> Result<QuadratureRule> {
    match kind {
        RuleKind::Trapezoid => QuadratureRule::trapezoid(interval, n),
        RuleKind::GaussLegendre => QuadratureRule::gauss_legendre(interval, n),
    }
}

/// Relative eigenvalue errors against a fine-grid reference.
///
/// `index_set` holds 1-based mode indices. Rows are `(n, k, rel_error)`.
pub fn grid_refinement_study(
    spec: &KernelSpec,
    interval: Interval,
    kind: RuleKind,
    index_set: &[usize],
    n_values: &[usize],
    n_ref: usize,
) -> Result<StudyReport> {
    let max_n = n_values.iter().copied().max().unwrap_or(0);
    if n_ref < max_n {
        return Err(KleError::invalid(format!(
            "reference grid n_ref = {n_ref} is coarser than n = {max_n}"
        )));
    }
    let max_k = index_set.iter().copied().max().unwrap_or(0);
    if index_set.contains(&0) {
        return Err(KleError::invalid("mode indices are 1-based"));
    }
    if let Some(&n) = n_values.iter().find(|&&n| n < max_k) {
        return Err(KleError::invalid(format!(
            "grid with n = {n} has fewer than {max_k} eigenvalues"
        )));
    }
    let reference = nystrom_spectrum(spec, &build_rule(kind, interval, n_ref)?)?;
    let mut report = StudyReport::new("grid_refinement", &["n", "k", "rel_error"]);
    report
        .param("kernel", spec.describe())
        .param("interval", [interval.a(), interval.b()])
        .param("rule", kind)
        .param("index_set", index_set)
        .param("n_values", n_values)
        .param("n_ref", n_ref);
    for &n in n_values {
        let spectrum = if n == n_ref {
            reference.clone()
        } else {
            nystrom_spectrum(spec, &build_rule(kind, interval, n)?)?
        };
        for &k in index_set {
            let exact = reference[k - 1];
            let rel = (spectrum[k - 1] - exact).abs() / exact;
            report.push_row(vec![n as f64, k as f64, rel])?;
        }
    }
    Ok(report)
}

/// Correlation `c(x0, y) / sigma^2` of the exponential kernel for each
/// correlation length and each `y`. Rows are `(ell, y, correlation)`.
pub fn correlation_study(
    sigma: f64,
    interval: Interval,
    x0: f64,
    y_grid: &[f64],
    ells: &[f64],
) -> Result<StudyReport> {
    interval.check(x0)?;
    let mut report = StudyReport::new("correlation", &["ell", "y", "correlation"]);
    report
        .param("sigma", sigma)
        .param("interval", [interval.a(), interval.b()])
        .param("x0", x0)
        .param("y_grid", y_grid)
        .param("ells", ells);
    for &ell in ells {
        let spec = KernelSpec::exponential(sigma, ell)?;
        for &y in y_grid {
            let c = spec.eval(&interval, x0, y)? / (sigma * sigma);
            report.push_row(vec![ell, y, c])?;
        }
    }
    Ok(report)
}

/// One line of the verification suite.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    fn push(&mut self, name: &str, passed: bool, value: f64, tolerance: f64, detail: String) {
        self.passed &= passed;
        self.checks.push(CheckResult {
            name: name.to_string(),
            passed,
            value,
            tolerance,
            detail,
        });
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Rank used for the coefficient statistics.
    pub rank: usize,
    pub seed: u64,
    pub coefficient_samples: usize,
    pub ky_fan_trials: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            rank: 10,
            seed: 0,
            coefficient_samples: 10_000,
            ky_fan_trials: 100,
        }
    }
}

/// Admissibility first, then every decomposition-level check.
pub fn verify(
    spec: &KernelSpec,
    rule: &QuadratureRule,
    opts: &VerifyOptions,
) -> Result<VerifyReport> {
    let mut report = VerifyReport {
        passed: true,
        checks: Vec::new(),
    };
    let adm = admissibility_check(spec, rule, 0.0)?;
    let lead = nystrom_spectrum(spec, rule)
        .map(|s| s[0])
        .unwrap_or(adm.min_eigenvalue.abs());
    let tol = CLIP_RELATIVE * lead.max(0.0);
    report.push(
        "admissibility",
        adm.min_eigenvalue >= -tol,
        adm.min_eigenvalue,
        -tol,
        "minimum eigenvalue of W^1/2 C W^1/2".into(),
    );
    if !report.passed {
        return Ok(report);
    }
    let dec = nystrom_eigen(spec, rule, rule.len())?;
    verify_decomposition(&dec, opts, &mut report)?;
    Ok(report)
}

/// Checks that run on a (possibly externally supplied) full decomposition.
pub fn verify_decomposition(
    dec: &SpectralDecomposition,
    opts: &VerifyOptions,
    report: &mut VerifyReport,
) -> Result<()> {
    let rule = dec.rule();
    let n = rule.len();
    let lead = dec.lambdas().first().copied().unwrap_or(0.0);

    let ti = trace_identity_check(dec)?;
    report.push(
        "trace_identity",
        ti.passed,
        ti.abs_gap,
        TRACE_TOL * ti.integral.abs().max(1.0),
        format!(
            "sum lambda = {:.17e}, integral c(x,x) = {:.17e}",
            ti.sum_lambdas, ti.integral
        ),
    );

    let orth = w_orthonormality_defect(rule, dec.eigvecs());
    report.push(
        "w_orthonormality",
        orth <= 1e-10,
        orth,
        1e-10,
        "max |v_i^T W v_j - delta_ij|".into(),
    );

    let resid = dec.max_residual()?;
    let resid_tol = 1e-8 * lead.max(1.0);
    report.push(
        "eigen_residual",
        resid <= resid_tol,
        resid,
        resid_tol,
        "max ||C W v_i - lambda_i v_i||".into(),
    );

    let diag_scale = rule
        .nodes()
        .iter()
        .fold(0.0f64, |m, &x| m.max(dec.spec().diagonal(x).abs()))
        .max(f64::MIN_POSITIVE);
    let mut ms: Vec<usize> = [1, 5, 20, 100].into_iter().filter(|&m| m < n).collect();
    ms.push(n);
    let residuals: Vec<f64> = ms
        .iter()
        .map(|&m| mercer_diagonal_residual(dec, m))
        .collect::<Result<_>>()?;
    let monotone = residuals.windows(2).all(|p| p[1] <= p[0] + 1e-12);
    let full = *residuals.last().unwrap_or(&0.0);
    report.push(
        "mercer_diagonal",
        monotone && full <= 1e-8 * diag_scale,
        full,
        1e-8 * diag_scale,
        format!("residuals at m = {ms:?}: {residuals:?}"),
    );

    let km = kernel_matrix(dec.spec(), rule)?;
    let mut worst_gap = f64::INFINITY;
    let ranks: Vec<usize> = [1usize, 5, 10].into_iter().filter(|&r| r <= n).collect();
    for trial in 0..opts.ky_fan_trials {
        let r = ranks[trial % ranks.len()];
        let basis = random_w_orthonormal_basis(rule, r, opts.seed.wrapping_add(trial as u64))?;
        worst_gap = worst_gap.min(optimality_gap_with(dec, km.entries().as_ref(), &basis)?);
    }
    let r_lead = ranks.last().copied().unwrap_or(1);
    let lead_basis = dec.eigvecs().get(.., ..r_lead).to_owned();
    let equality = optimality_gap_with(dec, km.entries().as_ref(), &lead_basis)?.abs();
    let gap_tol = 1e-10 * lead.max(f64::MIN_POSITIVE);
    report.push(
        "ky_fan",
        worst_gap >= -gap_tol && equality <= 1e-10 * lead.max(1.0),
        worst_gap,
        -gap_tol,
        format!(
            "min gap over {} random bases; |gap| at the leading basis = {equality:e}",
            opts.ky_fan_trials
        ),
    );

    let usable = dec
        .lambdas()
        .iter()
        .take_while(|&&l| !is_degenerate(l, lead))
        .count();
    let r = opts.rank.min(usable);
    if r > 0 && opts.coefficient_samples >= MIN_STAT_SAMPLES {
        let kle = build_truncated_kle(dec.spec(), rule, MeanFunction::Zero, Selection::Rank(r))?;
        let ens = sample(
            std::sync::Arc::new(kle),
            opts.coefficient_samples,
            opts.seed,
        )?;
        let stats = coefficient_stats(&ens)?;
        let nf = opts.coefficient_samples as f64;
        let mean_tol = 5.0 / nf.sqrt();
        let cov_tol = 5.0 * (2.0 / nf).sqrt();
        report.push(
            "coefficient_mean",
            stats.max_mean_abs() <= mean_tol,
            stats.max_mean_abs(),
            mean_tol,
            format!(
                "max |E[xi_i]| over r = {r}, N = {}",
                opts.coefficient_samples
            ),
        );
        report.push(
            "coefficient_covariance",
            stats.max_identity_defect() <= cov_tol,
            stats.max_identity_defect(),
            cov_tol,
            format!("max |E[xi_i xi_j] - delta_ij| over r = {r}"),
        );
    }
    Ok(())
}
