//! Batch runs driven by a [`RunConfig`].

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::basis::{product_state_expand, sym_dimension, SymBasis, SymState};
use crate::collective::{assemble, bosonize, cartan_pairs, check_sl2_relations, product_identities, SymLiouvillian};
use crate::config::{random_density, Mode, OutputFormat, RunConfig};
use crate::error::{Error, Result};
use crate::evolution::{one_body_moments, positivity_check, propagate, propagate_with, Method, PropagationSpec};
use crate::lambda::{
    apply_disentangled, bch_sl3_grid, build_lambda_liouvillian, closed_form_propagate, disentangle_residual,
    lambda_table, LambdaCoefficients,
};
use crate::liouville::{Operator, SuperMatrix};
use crate::oracle::{embed, full_dimension, full_liouvillian, full_propagate_grid, DEFAULT_CAP};

/// Largest trace drift accepted before a run is reported as a numerical failure.
pub const TRACE_DRIFT_TOL: f64 = 1e-6;

/// Thresholds of the validation suites.
pub const VALIDATE_TOL: f64 = 1e-8;
pub const EXACT_TOL: f64 = 1e-12;

/// What a successful run produced.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub rows: usize,
    /// Basis size of the symmetric subspace used, if any.
    pub dimension: Option<usize>,
    pub max_trace_deviation: Option<f64>,
    pub max_hermiticity_defect: Option<f64>,
    /// Largest analytic versus numerical deviation in lambda-analytic mode.
    pub max_deviation: Option<f64>,
}

/// Process exit code for an error: 1 for configuration problems, 2 for
/// numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonConvergence { .. } | Error::Branch { .. } | Error::Overflow(_) => 2,
        _ => 1,
    }
}

struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    fn write(&self, path: &Path, format: OutputFormat) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        match format {
            OutputFormat::Csv => {
                writeln!(w, "{}", self.columns.join(","))?;
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
                    writeln!(w, "{}", cells.join(","))?;
                }
            }
            OutputFormat::Json => {
                #[derive(Serialize)]
                struct Doc<'a> {
                    columns: &'a [String],
                    rows: &'a [Vec<f64>],
                }
                serde_json::to_writer_pretty(&mut w, &Doc { columns: &self.columns, rows: &self.rows })?;
                writeln!(w)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Executes `cfg`, writing its table or report to `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    match cfg.mode {
        Mode::Simulate => simulate(cfg, out),
        Mode::LambdaAnalytic => lambda_analytic(cfg, out),
        Mode::Validate => validate(cfg, out),
        Mode::Dims => dims(cfg, out),
    }
}

fn observable_columns(obs: &[(String, Operator)], suffix: &str) -> Vec<String> {
    obs.iter().flat_map(|(name, _)| [format!("{name}{suffix}_re"), format!("{name}{suffix}_im")]).collect()
}

fn push_expectations(row: &mut Vec<f64>, obs: &[(String, Operator)], r: &DMatrix<C64>) {
    for (_, o) in obs {
        let m = o.dim();
        let mut v = C64::new(0.0, 0.0);
        for i in 0..m {
            for j in 0..m {
                v += o[(i, j)] * r[(j, i)];
            }
        }
        row.push(v.re);
        row.push(v.im);
    }
}

fn check_drift(summary: &RunSummary) -> Result<()> {
    let drift = summary.max_trace_deviation.unwrap_or(0.0);
    if drift > TRACE_DRIFT_TOL {
        return Err(Error::NonConvergence {
            residual: drift,
            reason: format!("trace drifted by {drift:.3e} (limit {TRACE_DRIFT_TOL:.0e})"),
        });
    }
    Ok(())
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let basis = SymBasis::shared(cfg.levels(), cfg.n)?;
    let l = SymLiouvillian::from_hops(&bosonize(&cfg.model.single_liouvillian(cfg.n)?), basis.clone())?;
    let rho0 = cfg.initial_state(basis.clone())?;
    let obs = cfg.observables()?;
    let spec = cfg.spec()?;
    let mut table = Table::new(std::iter::once("time".to_string()).chain(observable_columns(&obs, "")).collect());
    let mut summary = RunSummary { dimension: Some(basis.size()), ..Default::default() };
    let (mut drift, mut herm) = (0.0f64, 0.0f64);
    propagate_with(&l, &rho0, &spec, |_, t, s| {
        let mut row = vec![t];
        push_expectations(&mut row, &obs, &one_body_moments(s));
        table.rows.push(row);
        drift = drift.max((s.trace() - 1.0).norm());
        herm = herm.max(s.hermiticity_defect());
        Ok(())
    })?;
    table.write(out, cfg.output.format)?;
    summary.rows = table.rows.len();
    summary.max_trace_deviation = Some(drift);
    summary.max_hermiticity_defect = Some(herm);
    check_drift(&summary)?;
    Ok(summary)
}

fn lambda_analytic(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let p = cfg.model.lambda_params(cfg.n).expect("checked by validate");
    let c = LambdaCoefficients::new(&p)?;
    let basis = SymBasis::shared(3, cfg.n)?;
    let l = SymLiouvillian::from_hops(&build_lambda_liouvillian(&p)?, basis.clone())?;
    let rho0 = cfg.initial_state(basis.clone())?;
    let obs = cfg.observables()?;
    let spec = cfg.spec()?;
    let bch = bch_sl3_grid(&c, spec.t_grid())?;
    let mut columns = vec!["time".to_string()];
    for (name, _) in &obs {
        for part in ["analytic_re", "analytic_im", "numeric_re", "numeric_im"] {
            columns.push(format!("{name}_{part}"));
        }
    }
    columns.push("max_deviation".into());
    let mut table = Table::new(columns);
    let (mut drift, mut herm, mut worst) = (0.0f64, 0.0f64, 0.0f64);
    propagate_with(&l, &rho0, &spec, |k, t, numeric| {
        let analytic = apply_disentangled(&c, &bch[k], &rho0, t)?;
        let (ra, rn) = (one_body_moments(&analytic), one_body_moments(numeric));
        let mut row = vec![t];
        for o in &obs {
            let one = std::slice::from_ref(o);
            push_expectations(&mut row, one, &ra);
            push_expectations(&mut row, one, &rn);
        }
        let dev = analytic.coeffs().iter().zip(numeric.coeffs()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        row.push(dev);
        table.rows.push(row);
        worst = worst.max(dev);
        drift = drift.max((numeric.trace() - 1.0).norm()).max((analytic.trace() - 1.0).norm());
        herm = herm.max(numeric.hermiticity_defect());
        Ok(())
    })?;
    table.write(out, cfg.output.format)?;
    let summary = RunSummary {
        rows: table.rows.len(),
        dimension: Some(basis.size()),
        max_trace_deviation: Some(drift),
        max_hermiticity_defect: Some(herm),
        max_deviation: Some(worst),
    };
    check_drift(&summary)?;
    Ok(summary)
}

fn dims(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let m = cfg.levels();
    let mut w = BufWriter::new(File::create(out)?);
    let mut rows = Vec::new();
    for n in 1..=cfg.n {
        let full = (m as u128)
            .checked_pow(2 * n as u32)
            .ok_or_else(|| Error::Overflow(format!("{m}^(2·{n}) does not fit in 128 bits")))?;
        rows.push((n, full, sym_dimension(m, n)?));
    }
    match cfg.output.format {
        OutputFormat::Csv => {
            writeln!(w, "N,full_dimension,symmetric_dimension")?;
            for (n, full, s) in &rows {
                writeln!(w, "{n},{full},{s}")?;
            }
        }
        OutputFormat::Json => {
            // 128-bit values are written as strings to stay exact
            let doc: Vec<_> = rows
                .iter()
                .map(|(n, full, s)| serde_json::json!({"N": n, "full_dimension": full.to_string(), "symmetric_dimension": s}))
                .collect();
            serde_json::to_writer_pretty(&mut w, &serde_json::json!({ "M": m, "rows": doc }))?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(RunSummary { rows: rows.len(), ..Default::default() })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
    pub passed: bool,
}

fn suite(name: &str, residual: Result<f64>, tol: f64) -> SuiteResult {
    match residual {
        Ok(r) => SuiteResult { name: name.into(), passed: r <= tol, residual: r, tol, detail: None },
        Err(e) => {
            SuiteResult { name: name.into(), passed: false, residual: f64::NAN, tol, detail: Some(e.to_string()) }
        }
    }
}

fn random_supermatrix(rng: &mut ChaCha8Rng, m: usize) -> Result<SuperMatrix> {
    let d = m * m;
    SuperMatrix::new(m, DMatrix::from_fn(d, d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
}

fn validation_times(cfg: &RunConfig) -> Vec<f64> {
    match cfg.spec() {
        Ok(spec) => spec.t_grid().to_vec(),
        Err(_) => vec![0.0, 0.5, 1.0],
    }
}

/// Runs the invariant suites on the configured model and writes a JSON
/// report. Suites that need the full space are restricted to `N` within
/// the oracle cap; the others use `min(N, 3)` systems.
pub fn validation_report(cfg: &RunConfig) -> Result<ValidationReport> {
    let m = cfg.levels();
    let l1 = cfg.model.single_liouvillian(cfg.n)?;
    let hops = bosonize(&l1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let small = SymBasis::shared(m, cfg.n.min(3))?;
    let mut suites = Vec::new();

    let other = random_supermatrix(&mut rng, m)?;
    suites.push(suite(
        "bosonization-homomorphism",
        (|| {
            let a = assemble(&hops, &small)?;
            let b = assemble(&bosonize(&other), &small)?;
            let ab = assemble(&bosonize(&l1.commutator(&other)), &small)?;
            Ok(a.commutator(&b)?.sub(&ab)?.max_abs() / ab.max_abs().max(1.0))
        })(),
        EXACT_TOL,
    ));
    suites.push(suite(
        "sl2-relations",
        cartan_pairs(m).into_iter().try_fold(0.0f64, |acc, pair| Ok(acc.max(check_sl2_relations(pair, &small)?))),
        EXACT_TOL,
    ));
    if m == 3 {
        suites.push(suite(
            "ladder-identities",
            product_identities::identities().and_then(|ids| {
                ids.iter().try_fold(0.0f64, |acc, id| Ok(acc.max(product_identities::residual(id, &small)?)))
            }),
            EXACT_TOL,
        ));
    }

    let times = validation_times(cfg);
    let rho1 = random_density(&mut rng, m);
    if full_dimension(m, cfg.n, DEFAULT_CAP).is_ok() {
        let basis = SymBasis::shared(m, cfg.n)?;
        let rho0 = product_state_expand(&rho1, basis.clone())?;
        let l = SymLiouvillian::from_hops(&hops, basis)?;
        let spec = PropagationSpec::new(times.clone(), Method::Auto, cfg.tol)?;
        let sym = propagate(&l, &rho0, &spec);
        suites.push(suite(
            "oracle-equivalence",
            sym.as_ref().map_err(clone_err).and_then(|states| {
                let lfull = full_liouvillian(&l1, cfg.n)?;
                let full = full_propagate_grid(&lfull, &embed(&rho0)?, &times, cfg.tol)?;
                states.iter().zip(&full).try_fold(0.0f64, |acc, (s, f)| {
                    Ok(acc.max(embed(s)?.distance(f)? / f.norm().max(f64::MIN_POSITIVE)))
                })
            }),
            VALIDATE_TOL,
        ));
        suites.push(suite("physicality", sym.as_ref().map_err(clone_err).and_then(|s| physicality(s)), VALIDATE_TOL));
        if l.dim() <= crate::evolution::DENSE_CAP {
            suites.push(suite(
                "method-agreement",
                sym.as_ref().map_err(clone_err).and_then(|dense| {
                    let mut worst = 0.0f64;
                    for method in [Method::DenseExpm, Method::KrylovExpmv, Method::AdaptiveOde] {
                        let spec = PropagationSpec::new(times.clone(), method, cfg.tol)?;
                        for (a, b) in propagate(&l, &rho0, &spec)?.iter().zip(dense) {
                            worst = worst.max(a.distance(b)? / b.norm());
                        }
                    }
                    Ok(worst)
                }),
                1e-7,
            ));
        }
    } else {
        suites.push(SuiteResult {
            name: "oracle-equivalence".into(),
            passed: true,
            residual: 0.0,
            tol: VALIDATE_TOL,
            detail: Some(format!("skipped: {m}^N exceeds the oracle cap of {DEFAULT_CAP}")),
        });
    }

    if let Some(p) = cfg.model.lambda_params(cfg.n) {
        let p_small = p.with_n(cfg.n.min(4));
        suites.push(suite(
            "lambda-table",
            (|| {
                let p_table = p.with_n(small.n());
                let a = assemble(&build_lambda_liouvillian(&p_table)?, &small)?;
                let b = assemble(&lambda_table(&p_table)?, &small)?;
                Ok(a.sub(&b)?.max_abs())
            })(),
            EXACT_TOL,
        ));
        let c = LambdaCoefficients::new(&p)?;
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.5 / p.gamma()).collect();
        suites.push(suite(
            "disentangling-identity",
            bch_sl3_grid(&c, &grid)
                .map(|bs| bs.iter().zip(&grid).map(|(b, &t)| disentangle_residual(&c, t, b)).fold(0.0, f64::max)),
            1e-10,
        ));
        suites.push(suite(
            "triple-agreement",
            (|| {
                let basis = SymBasis::shared(3, p_small.n)?;
                let rho0 = product_state_expand(&rho1, basis.clone())?;
                let l = SymLiouvillian::from_hops(&build_lambda_liouvillian(&p_small)?, basis)?;
                let spec = PropagationSpec::new(times.clone(), Method::Auto, cfg.tol.min(1e-10))?;
                let mut worst = 0.0f64;
                for (s, &t) in propagate(&l, &rho0, &spec)?.iter().zip(&times) {
                    let a = crate::lambda::analytic_propagate(&p_small, &rho0, t)?;
                    let cf = closed_form_propagate(&p_small, &rho0, t)?;
                    let scale = s.norm();
                    worst =
                        worst.max(a.distance(s)? / scale).max(cf.distance(s)? / scale).max(a.distance(&cf)? / scale);
                }
                Ok(worst)
            })(),
            1e-7,
        ));
    }
    let passed = suites.iter().all(|s| s.passed);
    Ok(ValidationReport { m, n: cfg.n, seed: cfg.seed, suites, passed })
}

fn clone_err(e: &Error) -> Error {
    match e {
        Error::NonConvergence { residual, reason } => {
            Error::NonConvergence { residual: *residual, reason: reason.clone() }
        }
        Error::Branch { expr, detail } => Error::Branch { expr, detail: detail.clone() },
        other => Error::InvalidArgument(other.to_string()),
    }
}

/// Largest violation of unit trace, Hermiticity and positivity of the
/// reduced density matrix along a trajectory.
pub fn physicality(states: &[SymState]) -> Result<f64> {
    let mut worst = 0.0f64;
    for s in states {
        worst = worst.max((s.trace() - 1.0).norm()).max(s.hermiticity_defect()).max((-positivity_check(s)?).max(0.0));
    }
    Ok(worst)
}

fn validate(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let report = validation_report(cfg)?;
    let mut w = BufWriter::new(File::create(out)?);
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;
    if !report.passed {
        let failed: Vec<&SuiteResult> = report.suites.iter().filter(|s| !s.passed).collect();
        let residual = failed.iter().map(|s| s.residual).fold(0.0, f64::max);
        let names: Vec<&str> = failed.iter().map(|s| s.name.as_str()).collect();
        return Err(Error::NonConvergence { residual, reason: format!("failed suites: {}", names.join(", ")) });
    }
    Ok(RunSummary { rows: report.suites.len(), ..Default::default() })
}
