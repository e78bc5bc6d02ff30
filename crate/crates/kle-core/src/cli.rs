//! Run configuration and the commands behind the `kle` binary.
//!
//! Every command writes plot-ready CSV tables plus a JSON sidecar holding
//! everything needed to regenerate them.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::diagnostics::{self, StudyReport, VerifyOptions, VerifyReport};
use crate::discrete_kle::cumulative_ratios;
use crate::eigen::nystrom_spectrum;
use crate::error::{KleError, Result};
use crate::field::{build_truncated_kle, sample, MeanFunction, Selection, TruncatedKLE};
use crate::format_f64;
use crate::kernels::{KernelConfig, KernelSpec};
use crate::quadrature::{Interval, QuadratureRule, RuleKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Description of the generator recorded in sample metadata.
pub const RNG_DESCRIPTION: &str =
    "ChaCha8Rng::seed_from_u64(seed), stream = realization index; rand_distr::StandardNormal (ziggurat)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    Trapezoid,
    Gauss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub rule: RuleName,
    pub n: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            rule: RuleName::Trapezoid,
            n: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanConfig {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// One value per quadrature node.
    Grid {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            n_samples: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationConfig {
    pub ranks: Vec<usize>,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig {
            ranks: vec![5, 15, 30, 100],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridRefinementConfig {
    pub index_set: Vec<usize>,
    pub n_values: Vec<usize>,
    pub n_ref: usize,
}

impl Default for GridRefinementConfig {
    fn default() -> Self {
        GridRefinementConfig {
            index_set: vec![5, 10],
            n_values: vec![20, 50, 100, 200, 500, 1000],
            n_ref: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationConfig {
    pub x0: f64,
    pub y_grid: Vec<f64>,
    pub ells: Vec<f64>,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig {
            x0: 0.25,
            y_grid: (0..=75).map(|i| 0.25 + 0.01 * i as f64).collect(),
            ells: vec![1.0 / 16.0, 1.0 / 8.0, 0.25, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub grid_refinement: GridRefinementConfig,
    pub correlation: CorrelationConfig,
}

/// Top-level JSON configuration shared by all subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: KernelConfig,
    pub interval: [f64; 2],
    pub quadrature: QuadratureConfig,
    pub mean: MeanConfig,
    pub selection: Selection,
    pub sampling: SamplingConfig,
    pub truncation: TruncationConfig,
    pub study: StudyConfig,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kernel: KernelConfig::Exponential {
                sigma: 1.0,
                ell: 1.0,
            },
            interval: [0.0, 1.0],
            quadrature: QuadratureConfig::default(),
            mean: MeanConfig::Zero,
            selection: Selection::Threshold(0.99),
            sampling: SamplingConfig::default(),
            truncation: TruncationConfig::default(),
            study: StudyConfig::default(),
            output: None,
        }
    }
}

/// Config after validation against every module precondition.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub spec: KernelSpec,
    pub rule: QuadratureRule,
    pub mean: MeanFunction,
}

fn field_err(field: &str) -> impl Fn(KleError) -> KleError + '_ {
    move |e| match e {
        KleError::Config {
            field: inner,
            message,
        } => KleError::config(format!("{field}.{inner}"), message),
        other => KleError::config(field, other.to_string()),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| KleError::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| KleError::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let spec = KernelSpec::from_config(&self.kernel).map_err(field_err("kernel"))?;
        let interval =
            Interval::new(self.interval[0], self.interval[1]).map_err(field_err("interval"))?;
        if matches!(spec, KernelSpec::BrownianMin) && interval.a() < 0.0 {
            return Err(KleError::config(
                "interval",
                "the min kernel needs a nonnegative interval",
            ));
        }
        let n = self.quadrature.n;
        let rule = match self.quadrature.rule {
            RuleName::Trapezoid => QuadratureRule::trapezoid(interval, n),
            RuleName::Gauss => QuadratureRule::gauss_legendre(interval, n),
        }
        .map_err(field_err("quadrature.n"))?;
        let mean = match &self.mean {
            MeanConfig::Zero => MeanFunction::Zero,
            MeanConfig::Constant { value } if value.is_finite() => MeanFunction::Constant(*value),
            MeanConfig::Constant { value } => {
                return Err(KleError::config(
                    "mean.value",
                    format!("must be finite, got {value}"),
                ))
            }
            MeanConfig::Grid { values } => {
                MeanFunction::grid(&rule, values.clone()).map_err(field_err("mean.values"))?
            }
        };
        match self.selection {
            Selection::Rank(r) if r == 0 || r > n => {
                return Err(KleError::config(
                    "selection.rank",
                    format!("must lie in 1..={n} (the number of nodes), got {r}"),
                ))
            }
            Selection::Threshold(t) if !(t > 0.0 && t <= 1.0) => {
                return Err(KleError::config(
                    "selection.threshold",
                    format!("must lie in (0, 1], got {t}"),
                ))
            }
            _ => {}
        }
        if self.sampling.n_samples == 0 {
            return Err(KleError::config("sampling.n_samples", "must be at least 1"));
        }
        Ok(Resolved { spec, rule, mean })
    }

    fn base_meta(&self, resolved: &Resolved) -> serde_json::Value {
        json!({
            "kernel": resolved.spec.describe(),
            "interval": self.interval,
            "quadrature": {"rule": resolved.rule.kind(), "n": resolved.rule.len()},
            "mean": resolved.mean.describe(),
            "selection": self.selection,
            "config": self,
        })
    }
}

/// Files a command produced and whether its checks passed.
#[derive(Debug, Clone)]
pub struct CommandOutcome {
    pub files: Vec<PathBuf>,
    pub passed: bool,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

/// `spectrum.csv`: `index,lambda,lambda_normalized,rho_cumulative`.
pub fn cmd_spectrum(config: &RunConfig, out: &Path) -> Result<CommandOutcome> {
    let resolved = config.resolve()?;
    prepare(out)?;
    let lambdas = nystrom_spectrum(&resolved.spec, &resolved.rule)?;
    let total = resolved.rule.integrate(|x| resolved.spec.diagonal(x))?;
    let rho = cumulative_ratios(&lambdas, total)?;
    let lead = lambdas[0];

    let csv_path = out.join("spectrum.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["index", "lambda", "lambda_normalized", "rho_cumulative"])?;
    for (i, (&l, &p)) in lambdas.iter().zip(&rho).enumerate() {
        w.write_record([
            (i + 1).to_string(),
            format_f64(l),
            format_f64(l / lead),
            format_f64(p),
        ])?;
    }
    w.flush()?;

    let meta_path = out.join("spectrum.meta.json");
    let mut meta = config.base_meta(&resolved);
    meta["total_variance"] = json!(total);
    meta["rows"] = json!(lambdas.len());
    write_json(&meta_path, &meta)?;
    Ok(CommandOutcome {
        files: vec![csv_path, meta_path],
        passed: true,
    })
}

fn build_kle(
    config: &RunConfig,
    resolved: &Resolved,
    select: Selection,
) -> Result<Arc<TruncatedKLE>> {
    Ok(Arc::new(
        build_truncated_kle(
            &resolved.spec,
            &resolved.rule,
            resolved.mean.clone(),
            select,
        )
        .map_err(|e| match e {
            KleError::InsufficientSpectrum { .. } | KleError::DegenerateMode { .. } => {
                KleError::config(
                    "selection",
                    format!("{e} (quadrature.n = {})", config.quadrature.n),
                )
            }
            other => other,
        })?,
    ))
}

/// `realizations.csv` (`x,sample_0,...`) and `meta.json`.
pub fn cmd_sample(config: &RunConfig, out: &Path) -> Result<CommandOutcome> {
    let resolved = config.resolve()?;
    prepare(out)?;
    let kle = build_kle(config, &resolved, config.selection)?;
    let count = config.sampling.n_samples;
    let ens = sample(kle.clone(), count, config.sampling.seed)?;
    let columns: Vec<Vec<f64>> = (0..count).map(|j| ens.nodal(j)).collect::<Result<_>>()?;

    let csv_path = out.join("realizations.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    let mut header = vec!["x".to_string()];
    header.extend((0..count).map(|j| format!("sample_{j}")));
    w.write_record(&header)?;
    for (k, &x) in resolved.rule.nodes().iter().enumerate() {
        let mut row = vec![format_f64(x)];
        row.extend(columns.iter().map(|c| format_f64(c[k])));
        w.write_record(&row)?;
    }
    w.flush()?;

    let meta_path = out.join("meta.json");
    let mut meta = config.base_meta(&resolved);
    meta["seed"] = json!(config.sampling.seed);
    meta["n_samples"] = json!(count);
    meta["r"] = json!(kle.rank());
    meta["rho"] = json!(kle.rho());
    meta["n"] = json!(resolved.rule.len());
    meta["rng"] = json!(RNG_DESCRIPTION);
    write_json(&meta_path, &meta)?;
    Ok(CommandOutcome {
        files: vec![csv_path, meta_path],
        passed: true,
    })
}

/// One realization (index 0 of the configured seed) at several truncation
/// levels: `truncation.csv` with columns `x,r_<r1>,r_<r2>,...`.
pub fn cmd_truncation(config: &RunConfig, ranks: &[usize], out: &Path) -> Result<CommandOutcome> {
    let resolved = config.resolve()?;
    if ranks.is_empty() {
        return Err(KleError::config(
            "truncation.ranks",
            "needs at least one rank",
        ));
    }
    if ranks.windows(2).any(|p| p[0] >= p[1]) {
        return Err(KleError::config(
            "truncation.ranks",
            "must be strictly ascending",
        ));
    }
    let max_rank = *ranks.last().unwrap_or(&0);
    if ranks[0] == 0 || max_rank > resolved.rule.len() {
        return Err(KleError::config(
            "truncation.ranks",
            format!("ranks must lie in 1..={}", resolved.rule.len()),
        ));
    }
    prepare(out)?;
    let kle = build_kle(config, &resolved, Selection::Rank(max_rank))?;
    let ens = sample(kle.clone(), 1, config.sampling.seed)?;
    let columns: Vec<Vec<f64>> = ranks
        .iter()
        .map(|&r| ens.nodal_truncated(0, r))
        .collect::<Result<_>>()?;

    let csv_path = out.join("truncation.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    let mut header = vec!["x".to_string()];
    header.extend(ranks.iter().map(|r| format!("r_{r}")));
    w.write_record(&header)?;
    for (k, &x) in resolved.rule.nodes().iter().enumerate() {
        let mut row = vec![format_f64(x)];
        row.extend(columns.iter().map(|c| format_f64(c[k])));
        w.write_record(&row)?;
    }
    w.flush()?;

    let meta_path = out.join("truncation.meta.json");
    let mut meta = config.base_meta(&resolved);
    meta["seed"] = json!(config.sampling.seed);
    meta["sample_index"] = json!(0);
    meta["ranks"] = json!(ranks);
    meta["rho"] = json!(ranks
        .iter()
        .map(|&r| kle.lambdas()[..r].iter().sum::<f64>() / kle.total_variance())
        .collect::<Vec<_>>());
    meta["n"] = json!(resolved.rule.len());
    meta["rng"] = json!(RNG_DESCRIPTION);
    write_json(&meta_path, &meta)?;
    Ok(CommandOutcome {
        files: vec![csv_path, meta_path],
        passed: true,
    })
}

/// Options the verification suite takes from a run config.
pub fn verify_options(config: &RunConfig) -> VerifyOptions {
    let defaults = VerifyOptions::default();
    VerifyOptions {
        rank: match config.selection {
            Selection::Rank(r) => r,
            Selection::Threshold(_) => defaults.rank,
        },
        seed: config.sampling.seed,
        coefficient_samples: if config.sampling.n_samples >= diagnostics::MIN_STAT_SAMPLES {
            config.sampling.n_samples
        } else {
            defaults.coefficient_samples
        },
        ..defaults
    }
}

fn write_verify(
    config: &RunConfig,
    resolved: &Resolved,
    report: &VerifyReport,
    out: &Path,
) -> Result<PathBuf> {
    let path = out.join("verify.json");
    let mut meta = config.base_meta(resolved);
    meta["passed"] = json!(report.passed);
    meta["checks"] = serde_json::to_value(&report.checks)?;
    write_json(&path, &meta)?;
    Ok(path)
}

/// Runs the diagnostic suite and writes `verify.json`.
pub fn cmd_verify(config: &RunConfig, out: &Path) -> Result<(CommandOutcome, VerifyReport)> {
    let resolved = config.resolve()?;
    run_verify(config, &resolved, out)
}

/// Verification with an already-resolved kernel and rule, which may include
/// custom kernels that have no JSON form.
pub fn run_verify(
    config: &RunConfig,
    resolved: &Resolved,
    out: &Path,
) -> Result<(CommandOutcome, VerifyReport)> {
    prepare(out)?;
    let report = diagnostics::verify(&resolved.spec, &resolved.rule, &verify_options(config))?;
    let path = write_verify(config, resolved, &report, out)?;
    Ok((
        CommandOutcome {
            files: vec![path],
            passed: report.passed,
        },
        report,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    GridRefinement,
    Correlation,
}

impl std::str::FromStr for StudyKind {
    type Err = KleError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid-refinement" => Ok(StudyKind::GridRefinement),
            "correlation" => Ok(StudyKind::Correlation),
            other => Err(KleError::config(
                "study",
                format!("unknown study `{other}`; expected grid-refinement or correlation"),
            )),
        }
    }
}

fn write_report(report: &StudyReport, stem: &str, out: &Path) -> Result<Vec<PathBuf>> {
    let csv_path = out.join(format!("{stem}.csv"));
    report.write_csv(fs::File::create(&csv_path)?)?;
    let json_path = out.join(format!("{stem}.json"));
    write_json(&json_path, report)?;
    Ok(vec![csv_path, json_path])
}

/// Writes `<study>.csv` and `<study>.json`.
pub fn cmd_study(
    config: &RunConfig,
    kind: StudyKind,
    out: &Path,
) -> Result<(CommandOutcome, StudyReport)> {
    let resolved = config.resolve()?;
    let interval = resolved.rule.interval();
    let (report, stem) = match kind {
        StudyKind::GridRefinement => {
            let p = &config.study.grid_refinement;
            let kind = match config.quadrature.rule {
                RuleName::Trapezoid => RuleKind::Trapezoid,
                RuleName::Gauss => RuleKind::GaussLegendre,
            };
            let report = diagnostics::grid_refinement_study(
                &resolved.spec,
                interval,
                kind,
                &p.index_set,
                &p.n_values,
                p.n_ref,
            )
            .map_err(field_err("study.grid_refinement"))?;
            (report, "grid_refinement")
        }
        StudyKind::Correlation => {
            let KernelSpec::Exponential { sigma, .. } = resolved.spec else {
                return Err(KleError::config(
                    "kernel",
                    "the correlation study needs the exponential kernel",
                ));
            };
            let p = &config.study.correlation;
            let report = diagnostics::correlation_study(sigma, interval, p.x0, &p.y_grid, &p.ells)
                .map_err(field_err("study.correlation"))?;
            (report, "correlation")
        }
    };
    prepare(out)?;
    let files = write_report(&report, stem, out)?;
    Ok((
        CommandOutcome {
            files,
            passed: true,
        },
        report,
    ))
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &KleError) -> i32 {
    match err {
        KleError::Config { .. } | KleError::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_CHECK_FAILED,
    }
}
