//! Prediction error, re-simulation error, accuracy curves and the batch
//! benchmark comparing two-step optimization with plain BFGS and GD.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{configuration_loss, InverseProblem};
use crate::optimize::{
    bfgs, bfgs_baseline, gd_baseline, two_step_optimize, BfgsOptions, GdOptions, OptResult, ProxyObjective, Stage,
    Termination,
};
use crate::proxy::model::sha256_hex;
use crate::proxy::ProxyModel;
use crate::simulators::trajectory::format_f64;
use crate::simulators::{Bounds, SystemSpec};

/// Stream offset separating start draws from problem draws.
const START_STREAM_SALT: u64 = 0x57A2_7000_0000_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    TwoStep,
    Bfgs,
    Gd,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::TwoStep, Method::Bfgs, Method::Gd];

    pub fn name(&self) -> &'static str {
        match self {
            Method::TwoStep => "two_step",
            Method::Bfgs => "bfgs",
            Method::Gd => "gd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown method {s:?}; expected two_step, bfgs or gd")))
    }
}

/// `e = ‖X_p − X*‖₂` (absolute difference in 1-D).
pub fn prediction_error(x_true: &[f64], x_pred: &[f64]) -> Result<f64> {
    if x_true.len() != x_pred.len() {
        return Err(Error::shape(format!(
            "prediction has {} parameters, truth has {}",
            x_pred.len(),
            x_true.len()
        )));
    }
    Ok(x_true
        .iter()
        .zip(x_pred)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// `r = ‖P(Y₀, X_p) − Y*‖²`, which is the configuration loss at `X_p`.
pub fn resimulation_error(problem: &InverseProblem, x_pred: &[f64]) -> Result<f64> {
    configuration_loss(problem, x_pred)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub threshold: f64,
    /// Percent of predictions with `e ≤ threshold`.
    pub accuracy: f64,
}

/// Accuracy at each threshold. `None` errors (crashed runs) count as misses.
pub fn accuracy_curve(errors: &[Option<f64>], thresholds: &[f64]) -> Result<Vec<AccuracyPoint>> {
    if errors.is_empty() {
        return Err(Error::config("accuracy curve needs at least one row"));
    }
    Ok(thresholds
        .iter()
        .map(|&t| {
            let hits = errors.iter().filter(|e| matches!(e, Some(v) if *v <= t)).count();
            AccuracyPoint {
                threshold: t,
                accuracy: 100.0 * hits as f64 / errors.len() as f64,
            }
        })
        .collect())
}

/// 20 log-spaced thresholds over `[1e-3, 0.5] × scale` where `scale` is the
/// width of `Z` (its diagonal in more than one dimension).
pub fn default_thresholds(bounds: &Bounds) -> Vec<f64> {
    let scale = bounds.diagonal();
    let (lo, hi) = (1e-3f64.ln(), 0.5f64.ln());
    (0..20)
        .map(|i| (lo + (hi - lo) * i as f64 / 19.0).exp() * scale)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    /// Every run starts from the center of `Z`.
    Center,
    /// Seeded uniform draws, shared across methods.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub system: SystemSpec,
    pub problem_count: usize,
    pub methods: Vec<Method>,
    pub problem_seed: u64,
    pub start_seed: u64,
    pub start_mode: StartMode,
    /// Starts per problem; the run with the lowest final ground-truth loss is
    /// reported.
    pub starts_per_problem: usize,
    /// Reuse problem 0's initial state for every problem.
    pub shared_initial_state: bool,
    /// Empty selects [`default_thresholds`].
    pub thresholds: Vec<f64>,
    pub bfgs: BfgsOptions,
    pub gd: GdOptions,
}

impl BenchmarkConfig {
    pub fn new(system: SystemSpec, problem_count: usize, methods: &[Method]) -> Self {
        Self {
            system,
            problem_count,
            methods: methods.to_vec(),
            problem_seed: 0,
            start_seed: 1,
            start_mode: StartMode::Uniform,
            starts_per_problem: 1,
            shared_initial_state: false,
            thresholds: Vec::new(),
            bfgs: BfgsOptions::default(),
            gd: GdOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.problem_count == 0 || self.starts_per_problem == 0 {
            return Err(Error::config("problem_count and starts_per_problem must be positive"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("benchmark needs at least one method"));
        }
        if self.thresholds.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::config("thresholds must be positive and finite"));
        }
        self.bfgs.validate()?;
        if !(self.gd.learning_rate > 0.0 && self.gd.learning_rate.is_finite()) {
            return Err(Error::config("gd learning_rate must be positive"));
        }
        Ok(())
    }

    pub fn resolved_thresholds(&self) -> Vec<f64> {
        let mut t = if self.thresholds.is_empty() {
            default_thresholds(&self.system.bounds())
        } else {
            self.thresholds.clone()
        };
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    /// The seeded problems this configuration evaluates.
    pub fn problems(&self) -> Result<Vec<InverseProblem>> {
        let problems = InverseProblem::batch(&self.system, self.problem_seed, self.problem_count)?;
        if !self.shared_initial_state || self.system.is_analytic() {
            return Ok(problems);
        }
        let y0 = problems[0].initial_state.clone();
        problems
            .into_par_iter()
            .map(|p| InverseProblem::new(p.id, p.system, y0.clone(), p.true_params))
            .collect()
    }

    /// Starting points for `problem`, identical for every method.
    pub fn starts(&self, problem: &InverseProblem) -> Vec<Vec<f64>> {
        let bounds = problem.bounds();
        match self.start_mode {
            StartMode::Center => vec![bounds.center(); self.starts_per_problem],
            StartMode::Uniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.start_seed);
                rng.set_stream(START_STREAM_SALT ^ problem.id);
                (0..self.starts_per_problem).map(|_| bounds.sample(&mut rng)).collect()
            }
        }
    }
}

/// One method on one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub problem_id: u64,
    pub method: Method,
    pub x0: Vec<f64>,
    pub x_true: Vec<f64>,
    pub x_pred: Option<Vec<f64>>,
    /// `|X_p − X*|` per axis.
    pub axis_errors: Option<Vec<f64>>,
    pub e: Option<f64>,
    pub r: Option<f64>,
    pub termination: Option<Termination>,
    pub primary_fallback: bool,
    /// Two-step only: `X₁*` and the ground-truth loss where the secondary
    /// stage started.
    pub x_primary: Option<Vec<f64>>,
    pub primary_loss: Option<f64>,
    pub steps: usize,
    pub failure: Option<String>,
    pub wall_time: f64,
}

impl EvalRow {
    pub fn converged(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCurve {
    pub method: Method,
    pub points: Vec<AccuracyPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub config: BenchmarkConfig,
    pub model_hash: Option<String>,
    pub rows: Vec<EvalRow>,
    pub thresholds: Vec<f64>,
    pub curves: Vec<MethodCurve>,
}

#[derive(Serialize)]
struct ReportSummary<'a> {
    config: &'a BenchmarkConfig,
    problem_seed: u64,
    start_seed: u64,
    model_hash: &'a Option<String>,
    thresholds: &'a [f64],
    curves: &'a [MethodCurve],
    methods: Vec<MethodSummary>,
}

#[derive(Serialize)]
struct MethodSummary {
    method: Method,
    rows: usize,
    failures: usize,
    fallbacks: usize,
    median_e: Option<f64>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

fn push_vec(row: &mut Vec<String>, v: Option<&Vec<f64>>, dim: usize) {
    match v {
        Some(v) => row.extend(v.iter().map(|&x| format_f64(x))),
        None => row.extend(std::iter::repeat_n(String::new(), dim)),
    }
}

impl EvalReport {
    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &EvalRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    /// Percent of `method` rows with `e ≤ threshold`.
    pub fn success_rate(&self, method: Method, threshold: f64) -> f64 {
        let errors: Vec<Option<f64>> = self.rows_for(method).map(|r| r.e).collect();
        accuracy_curve(&errors, &[threshold])
            .map(|c| c[0].accuracy)
            .unwrap_or(0.0)
    }

    pub fn curve(&self, method: Method) -> Option<&MethodCurve> {
        self.curves.iter().find(|c| c.method == method)
    }

    /// Per-row CSV; wall time is left to [`Self::write_timings_csv`].
    pub fn write_rows_csv(&self, w: impl Write) -> Result<()> {
        let names = self.config.system.param_names();
        let dim = names.len();
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["problem_id".to_string(), "method".to_string()];
        for prefix in ["x0", "x_true", "x_pred", "err", "x_primary"] {
            header.extend(names.iter().map(|n| format!("{prefix}_{n}")));
        }
        header.extend(
            [
                "e",
                "r",
                "primary_loss",
                "termination",
                "primary_fallback",
                "steps",
                "converged",
                "failure",
            ]
            .map(String::from),
        );
        out.write_record(&header)?;
        for r in &self.rows {
            let mut row = vec![r.problem_id.to_string(), r.method.name().to_string()];
            push_vec(&mut row, Some(&r.x0), dim);
            push_vec(&mut row, Some(&r.x_true), dim);
            push_vec(&mut row, r.x_pred.as_ref(), dim);
            push_vec(&mut row, r.axis_errors.as_ref(), dim);
            push_vec(&mut row, r.x_primary.as_ref(), dim);
            row.push(opt_f64(r.e));
            row.push(opt_f64(r.r));
            row.push(opt_f64(r.primary_loss));
            row.push(r.termination.map(termination_name).unwrap_or_default().to_string());
            row.push(r.primary_fallback.to_string());
            row.push(r.steps.to_string());
            row.push(r.converged().to_string());
            row.push(r.failure.clone().unwrap_or_default());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// `method, threshold, accuracy` per curve point.
    pub fn write_summary_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["method", "threshold", "accuracy"])?;
        for c in &self.curves {
            for p in &c.points {
                out.write_record([
                    c.method.name().to_string(),
                    format_f64(p.threshold),
                    format_f64(p.accuracy),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_timings_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["problem_id", "method", "wall_time"])?;
        for r in &self.rows {
            out.write_record([
                r.problem_id.to_string(),
                r.method.name().to_string(),
                format!("{:.6}", r.wall_time),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Config echo, seeds, model hash, thresholds and curves.
    pub fn summary_json(&self) -> Result<String> {
        let methods = self
            .config
            .methods
            .iter()
            .map(|&m| {
                let rows: Vec<&EvalRow> = self.rows_for(m).collect();
                MethodSummary {
                    method: m,
                    rows: rows.len(),
                    failures: rows.iter().filter(|r| !r.converged()).count(),
                    fallbacks: rows.iter().filter(|r| r.primary_fallback).count(),
                    median_e: median(rows.iter().filter_map(|r| r.e).collect()),
                }
            })
            .collect();
        let summary = ReportSummary {
            config: &self.config,
            problem_seed: self.config.problem_seed,
            start_seed: self.config.start_seed,
            model_hash: &self.model_hash,
            thresholds: &self.thresholds,
            curves: &self.curves,
            methods,
        };
        Ok(serde_json::to_string_pretty(&summary)?)
    }

    /// SHA-256 over the rows CSV, summary CSV and JSON summary. Timings are
    /// excluded so reruns hash identically.
    pub fn content_hash(&self) -> Result<String> {
        let mut bytes = Vec::new();
        self.write_rows_csv(&mut bytes)?;
        self.write_summary_csv(&mut bytes)?;
        bytes.extend(self.summary_json()?.into_bytes());
        Ok(sha256_hex(&bytes))
    }

    /// Writes `rows.csv`, `summary.csv` and `report.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_rows_csv(fs::File::create(dir.join("rows.csv"))?)?;
        self.write_summary_csv(fs::File::create(dir.join("summary.csv"))?)?;
        fs::write(dir.join("report.json"), self.summary_json()?)?;
        Ok(())
    }
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::GradientTol => "gradient_tol",
        Termination::MaxIter => "max_iter",
        Termination::LineSearchFail => "line_search_fail",
        Termination::BoundHit => "bound_hit",
    }
}

fn run_method(
    config: &BenchmarkConfig,
    model: Option<&ProxyModel>,
    problem: &InverseProblem,
    method: Method,
    x0: &[f64],
) -> Result<OptResult> {
    match method {
        Method::TwoStep => {
            let model = model.ok_or_else(|| Error::config("two_step needs a trained proxy model"))?;
            two_step_optimize(model, problem, x0, &config.bfgs)
        }
        Method::Bfgs => bfgs_baseline(problem, x0, &config.bfgs),
        Method::Gd => gd_baseline(problem, x0, &config.gd),
    }
}

fn row_from(problem: &InverseProblem, method: Method, x0: &[f64], outcome: Result<OptResult>) -> EvalRow {
    let mut row = EvalRow {
        problem_id: problem.id,
        method,
        x0: x0.to_vec(),
        x_true: problem.true_params.clone(),
        x_pred: None,
        axis_errors: None,
        e: None,
        r: None,
        termination: None,
        primary_fallback: false,
        x_primary: None,
        primary_loss: None,
        steps: 0,
        failure: None,
        wall_time: 0.0,
    };
    let result = outcome.and_then(|res| {
        let r = resimulation_error(problem, &res.x_predicted)?;
        let e = prediction_error(&problem.true_params, &res.x_predicted)?;
        Ok((res, e, r))
    });
    match result {
        Ok((res, e, r)) => {
            let last = res.secondary_trace.as_ref().unwrap_or(&res.primary_trace);
            row.axis_errors = Some(
                problem
                    .true_params
                    .iter()
                    .zip(&res.x_predicted)
                    .map(|(a, b)| (a - b).abs())
                    .collect(),
            );
            row.e = Some(e);
            row.r = Some(r);
            row.termination = Some(last.termination);
            row.primary_fallback = res.primary_fallback;
            row.steps = res.traces().iter().map(|t| t.steps()).sum();
            if let Some(sec) = &res.secondary_trace {
                row.x_primary = Some(res.primary_point().to_vec());
                row.primary_loss = Some(sec.iterates[0].value);
            }
            row.wall_time = res.wall_time;
            row.x_pred = Some(res.x_predicted);
        }
        Err(err) => {
            log::warn!("{} on problem {}: {err}", method.name(), problem.id);
            row.failure = Some(err.to_string());
        }
    }
    row
}

/// Best of the starts by final ground-truth loss; a crash only wins when every
/// start crashed.
fn evaluate(
    config: &BenchmarkConfig,
    model: Option<&ProxyModel>,
    problem: &InverseProblem,
    method: Method,
    starts: &[Vec<f64>],
) -> EvalRow {
    let mut best: Option<EvalRow> = None;
    for x0 in starts {
        let row = row_from(problem, method, x0, run_method(config, model, problem, method, x0));
        let better = match &best {
            None => true,
            Some(b) => match (row.r, b.r) {
                (Some(a), Some(c)) => a < c,
                (Some(_), None) => true,
                _ => false,
            },
        };
        if better {
            best = Some(row);
        }
    }
    best.expect("at least one start")
}

/// Run every method on every seeded problem from identical starts.
///
/// Problems run concurrently; rows come back in problem order, then in the
/// order of `config.methods`.
pub fn run_benchmark(config: &BenchmarkConfig, model: Option<&ProxyModel>) -> Result<EvalReport> {
    config.validate()?;
    if config.methods.contains(&Method::TwoStep) && model.is_none() {
        return Err(Error::config("two_step needs a trained proxy model"));
    }
    let problems = config.problems()?;
    let rows: Vec<EvalRow> = problems
        .par_iter()
        .map(|p| {
            let starts = config.starts(p);
            config
                .methods
                .iter()
                .map(|&m| evaluate(config, model, p, m, &starts))
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let thresholds = config.resolved_thresholds();
    let curves = config
        .methods
        .iter()
        .map(|&m| {
            let errors: Vec<Option<f64>> = rows.iter().filter(|r| r.method == m).map(|r| r.e).collect();
            Ok(MethodCurve {
                method: m,
                points: accuracy_curve(&errors, &thresholds)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        config: config.clone(),
        model_hash: model.map(|m| m.content_hash()).transpose()?,
        rows,
        thresholds,
        curves,
    })
}

/// Fraction of runs whose proxy-only BFGS stage ends within `threshold` of
/// the truth. Used to pick among models trained with different `σ` on
/// held-out problems and starts.
pub fn primary_success_rate(
    model: &ProxyModel,
    problems: &[InverseProblem],
    starts_per_problem: &[Vec<Vec<f64>>],
    threshold: f64,
    opts: &BfgsOptions,
) -> Result<f64> {
    if problems.len() != starts_per_problem.len() {
        return Err(Error::shape("one start list per problem is required"));
    }
    let hits: Vec<(usize, usize)> = problems
        .par_iter()
        .zip(starts_per_problem)
        .map(|(p, starts)| -> Result<(usize, usize)> {
            let obj = ProxyObjective::new(model, p)?;
            let mut hit = 0;
            for x0 in starts {
                if let Ok(trace) = bfgs(&obj, x0, opts, Stage::Primary) {
                    if prediction_error(&p.true_params, &trace.last().x)? <= threshold {
                        hit += 1;
                    }
                }
            }
            Ok((hit, starts.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (hit, total) = hits.iter().fold((0, 0), |(h, t), (a, b)| (h + a, t + b));
    if total == 0 {
        return Err(Error::config("no starts to evaluate"));
    }
    Ok(hit as f64 / total as f64)
}

/// Index of the model with the highest primary-stage success rate (first on
/// ties), with every rate.
pub fn select_model(
    models: &[ProxyModel],
    problems: &[InverseProblem],
    starts_per_problem: &[Vec<Vec<f64>>],
    threshold: f64,
    opts: &BfgsOptions,
) -> Result<(usize, Vec<f64>)> {
    if models.is_empty() {
        return Err(Error::config("no models to select from"));
    }
    let rates = models
        .iter()
        .map(|m| primary_success_rate(m, problems, starts_per_problem, threshold, opts))
        .collect::<Result<Vec<_>>>()?;
    let best = rates
        .iter()
        .enumerate()
        .fold(0, |best, (i, &r)| if r > rates[best] { i } else { best });
    Ok((best, rates))
}
