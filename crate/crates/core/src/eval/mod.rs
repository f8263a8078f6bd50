//! Evaluation harness: CSV ingestion, horizontal partitioning, downstream
//! regression models, cross-validated comparison of centralized, separate
//! and privacy-preserving PCA, and the party-count benchmark.

mod data;
mod models;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

pub use data::{load_csv, partition_horizontal, partition_indices, read_csv, write_matrix_csv, CsvOptions, Dataset};
pub use models::{auc, predict_proba, rmse, train_linreg, train_logreg, LinearModel, LogregParams, RIDGE};

use crate::linalg::{center_columns, centralized_pca, column_means, project, LinalgError, Matrix};
use crate::party::PartyId;
use crate::protocol::{run_session, Method, MessageType, ProtocolError, SessionConfig, Transcript};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    Io(String),
    #[error("CSV error: {0}")]
    Csv(String),
    #[error("row {row}, column {col}: cannot parse {cell:?} as a number")]
    Parse { row: usize, col: usize, cell: String },
    #[error("row {row} has {found} fields, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("label column {0:?} not found")]
    MissingLabel(String),
    #[error("no data rows")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{0}")]
    Partition(String),
    #[error("invalid labels: {0}")]
    Labels(String),
    #[error("AUC is undefined when only one class is present")]
    SingleClass,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

impl EvalError {
    /// Failures raised by the multi-party protocol rather than the inputs.
    pub fn is_protocol(&self) -> bool {
        match self {
            EvalError::Protocol(e) => !matches!(e, ProtocolError::Data(_)),
            _ => false,
        }
    }
}

impl From<csv::Error> for EvalError {
    fn from(e: csv::Error) -> Self {
        EvalError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EvalMethod {
    Centralized,
    Separate,
    PppcaHe,
    PppcaSs,
}

impl EvalMethod {
    pub const ALL: [EvalMethod; 4] =
        [EvalMethod::Centralized, EvalMethod::Separate, EvalMethod::PppcaHe, EvalMethod::PppcaSs];

    pub fn protocol(self) -> Option<Method> {
        match self {
            EvalMethod::PppcaHe => Some(Method::He),
            EvalMethod::PppcaSs => Some(Method::Ss),
            _ => None,
        }
    }

    /// Parses a comma-separated list; `all` selects every method.
    pub fn parse_list(s: &str) -> Result<Vec<EvalMethod>, String> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part.eq_ignore_ascii_case("all") {
                out.extend(Self::ALL);
            } else {
                out.push(part.parse()?);
            }
        }
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err("no methods selected".into());
        }
        Ok(out)
    }
}

impl fmt::Display for EvalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMethod::Centralized => "centralized",
            EvalMethod::Separate => "separate",
            EvalMethod::PppcaHe => "pppca-he",
            EvalMethod::PppcaSs => "pppca-ss",
        })
    }
}

impl FromStr for EvalMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method {s:?}, expected centralized, separate, pppca-he, pppca-ss or all"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Regression,
    Classification,
}

impl Task {
    /// Classification when every label is 0 or 1.
    pub fn infer(ds: &Dataset) -> Task {
        if ds.is_binary() {
            Task::Classification
        } else {
            Task::Regression
        }
    }

    pub fn metric(self) -> &'static str {
        match self {
            Task::Regression => "rmse",
            Task::Classification => "auc",
        }
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            other => Err(format!("unknown task {other:?}, expected regression or classification")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompareOptions {
    pub parties: u16,
    pub k: usize,
    pub methods: Vec<EvalMethod>,
    pub folds: usize,
    /// Seeds the fold and provider assignment.
    pub seed: u64,
    /// Inferred from the labels when absent.
    pub task: Option<Task>,
    /// Scale features to unit variance with training-row statistics.
    pub standardize: bool,
    pub logreg: LogregParams,
    /// Protocol settings; method, party count and `k` are overridden, and a
    /// seed here is offset by the fold number.
    pub session: SessionConfig,
}

impl CompareOptions {
    pub fn new(parties: u16, k: usize, methods: Vec<EvalMethod>, seed: u64) -> Self {
        Self {
            parties,
            k,
            methods,
            folds: 5,
            seed,
            task: None,
            standardize: false,
            logreg: LogregParams::default(),
            session: SessionConfig::default().with_seed(seed),
        }
    }
}

/// Row assignment of one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub test: Vec<usize>,
    /// Training rows held by each provider.
    pub train: Vec<Vec<usize>>,
    /// Test rows held by each provider.
    pub test_by_provider: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn train_rows(&self) -> Vec<usize> {
        self.train.concat()
    }
}

pub fn cv_plan(rows: usize, folds: usize, parties: usize, seed: u64) -> Result<Vec<FoldPlan>, EvalError> {
    if folds < 2 {
        return Err(EvalError::Partition(format!("need at least 2 folds, got {folds}")));
    }
    let assignment = partition_indices(rows, folds, seed)?;
    let pick = |from: &[usize], parts: Vec<Vec<usize>>| -> Vec<Vec<usize>> {
        parts.into_iter().map(|p| p.into_iter().map(|i| from[i]).collect()).collect()
    };
    assignment
        .iter()
        .enumerate()
        .map(|(f, test)| {
            let train: Vec<usize> = assignment.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, a)| a.clone()).collect();
            let fold_seed = seed.wrapping_add(1 + f as u64);
            let train_split = pick(&train, partition_indices(train.len(), parties, fold_seed)?);
            let test_split = pick(test, partition_indices(test.len(), parties, fold_seed ^ 0x5a5a)?);
            Ok(FoldPlan { test: test.clone(), train: train_split, test_by_provider: test_split })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub method: EvalMethod,
    pub k: usize,
    pub task: Task,
    pub fold_metrics: Vec<f64>,
    pub mean_metric: f64,
    /// Seconds per phase summed over folds.
    pub phase_seconds: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn total_seconds(&self) -> f64 {
        self.phase_seconds.values().sum()
    }
}

fn standardizer(x: &Matrix) -> Vec<f64> {
    let mean = column_means(x);
    let n = x.rows().max(2) as f64 - 1.0;
    (0..x.cols())
        .map(|c| {
            let var = (0..x.rows()).map(|r| (x.get(r, c) - mean[c]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                1.0 / var.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

fn scale_columns(x: &Matrix, s: &[f64]) -> Result<Matrix, LinalgError> {
    Matrix::from_fn(x.rows(), x.cols(), |r, c| x.get(r, c) * s[c])
}

/// Train and test features of one fold after the PCA transform, with the
/// training labels in matching row order.
struct Transformed {
    train: Matrix,
    train_y: Vec<f64>,
    test: Matrix,
    test_y: Vec<f64>,
}

fn apply(x: &Matrix, mean: &[f64], t: &Matrix) -> Result<Matrix, LinalgError> {
    project(&center_columns(x, mean)?, t)
}

fn transform(
    method: EvalMethod,
    x: &Matrix,
    y: &[f64],
    plan: &FoldPlan,
    opts: &CompareOptions,
    fold: usize,
    timings: &mut BTreeMap<String, f64>,
) -> Result<Transformed, EvalError> {
    let rows_of = |idx: &[usize]| x.select_rows(idx);
    let labels_of = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<_>>();
    let train_idx = plan.train_rows();
    let start = Instant::now();
    let out = match method {
        EvalMethod::Centralized => {
            let fit = centralized_pca(&rows_of(&train_idx)?, opts.k)?;
            Transformed {
                train: fit.reduced,
                train_y: labels_of(&train_idx),
                test: apply(&rows_of(&plan.test)?, &fit.mean, &fit.transfer)?,
                test_y: labels_of(&plan.test),
            }
        }
        EvalMethod::Separate => {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (tr, te) in plan.train.iter().zip(&plan.test_by_provider) {
                let fit = centralized_pca(&rows_of(tr)?, opts.k)?;
                train.push(fit.reduced);
                test.push(apply(&rows_of(te)?, &fit.mean, &fit.transfer)?);
            }
            let test_idx = plan.test_by_provider.concat();
            Transformed {
                train: Matrix::vstack(&train)?,
                train_y: labels_of(&train_idx),
                test: Matrix::vstack(&test)?,
                test_y: labels_of(&test_idx),
            }
        }
        EvalMethod::PppcaHe | EvalMethod::PppcaSs => {
            let cfg = SessionConfig {
                method: method.protocol().expect("protocol method"),
                parties: opts.parties,
                k: opts.k,
                seed: opts.session.seed.map(|s| s.wrapping_add(fold as u64)),
                ..opts.session.clone()
            };
            let parts = plan.train.iter().map(|idx| rows_of(idx)).collect::<Result<Vec<_>, _>>()?;
            let outcome = run_session(&cfg, parts)?;
            for (step, secs) in &outcome.phase_seconds {
                *timings.entry(step.to_string()).or_default() += secs;
            }
            let test = apply(&rows_of(&plan.test)?, &outcome.mean, &outcome.transfer)?;
            Transformed { train: outcome.reduced, train_y: labels_of(&train_idx), test, test_y: labels_of(&plan.test) }
        }
    };
    if method.protocol().is_none() {
        *timings.entry("pca".into()).or_default() += start.elapsed().as_secs_f64();
    }
    Ok(out)
}

fn score(task: Task, t: &Transformed, params: &LogregParams) -> Result<f64, EvalError> {
    match task {
        Task::Regression => {
            let model = train_linreg(&t.train, &t.train_y)?;
            rmse(&model.predict(&t.test), &t.test_y)
        }
        Task::Classification => {
            let model = train_logreg(&t.train, &t.train_y, params)?;
            auc(&predict_proba(&model, &t.test), &t.test_y)
        }
    }
}

/// Cross-validates every requested method. Within a fold each PCA
/// transform is fit on the training rows only and applied to the test
/// rows; separate PCA fits one transform per provider.
pub fn compare(ds: &Dataset, opts: &CompareOptions) -> Result<Vec<RunReport>, EvalError> {
    let y = ds.labels.as_deref().ok_or_else(|| EvalError::Labels("dataset has no label column".into()))?;
    let task = opts.task.unwrap_or_else(|| Task::infer(ds));
    if task == Task::Classification && !ds.is_binary() {
        return Err(EvalError::Labels("classification needs 0/1 labels".into()));
    }
    if opts.parties < 2 {
        return Err(EvalError::Partition(format!("need at least 2 providers, got {}", opts.parties)));
    }
    if opts.k == 0 || opts.k >= ds.cols() {
        return Err(EvalError::Shape(format!("k = {} must be in 1..{}", opts.k, ds.cols())));
    }
    let plans = cv_plan(ds.rows(), opts.folds, opts.parties as usize, opts.seed)?;
    let mut reports = Vec::new();
    for &method in &opts.methods {
        let mut timings = BTreeMap::new();
        let mut fold_metrics = Vec::with_capacity(plans.len());
        for (f, plan) in plans.iter().enumerate() {
            let x = if opts.standardize {
                let s = standardizer(&ds.features.select_rows(&plan.train_rows())?);
                scale_columns(&ds.features, &s)?
            } else {
                ds.features.clone()
            };
            let t = transform(method, &x, y, plan, opts, f, &mut timings)?;
            let start = Instant::now();
            fold_metrics.push(score(task, &t, &opts.logreg)?);
            *timings.entry("model".into()).or_default() += start.elapsed().as_secs_f64();
        }
        let mean_metric = fold_metrics.iter().sum::<f64>() / fold_metrics.len() as f64;
        reports.push(RunReport { method, k: opts.k, task, fold_metrics, mean_metric, phase_seconds: timings });
    }
    Ok(reports)
}

/// Aligned text table; timings are included only when asked for.
pub fn format_reports(reports: &[RunReport], timings: bool) -> String {
    let folds = reports.iter().map(|r| r.fold_metrics.len()).max().unwrap_or(0);
    let mut header = vec!["method".to_string(), "k".into(), "metric".into()];
    header.extend((1..=folds).map(|f| format!("fold{f}")));
    header.push("mean".into());
    if timings {
        header.push("seconds".into());
    }
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![r.method.to_string(), r.k.to_string(), r.task.metric().into()];
            row.extend(r.fold_metrics.iter().map(|m| format!("{m:.6}")));
            row.push(format!("{:.6}", r.mean_metric));
            if timings {
                row.push(format!("{:.3}", r.total_seconds()));
            }
            row
        })
        .collect();
    table(&header, &rows)
}

/// Metrics as CSV with full precision; the bytes depend only on the inputs.
pub fn reports_csv(reports: &[RunReport]) -> String {
    let folds = reports.iter().map(|r| r.fold_metrics.len()).max().unwrap_or(0);
    let mut out = String::from("method,k,metric");
    for f in 1..=folds {
        let _ = write!(out, ",fold{f}");
    }
    out.push_str(",mean\n");
    for r in reports {
        let _ = write!(out, "{},{},{}", r.method, r.k, r.task.metric());
        for m in &r.fold_metrics {
            let _ = write!(out, ",{m:e}");
        }
        let _ = writeln!(out, ",{:e}", r.mean_metric);
    }
    out
}

fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for row in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub parties: u16,
    pub method: Method,
    pub seconds: f64,
    pub messages: usize,
    pub counts: BTreeMap<MessageType, usize>,
    pub sent_by: BTreeMap<PartyId, usize>,
    pub transcript: Transcript,
}

/// One full simulated session per party count on the same rows.
pub fn bench(x: &Matrix, parties: &[u16], session: &SessionConfig, seed: u64) -> Result<Vec<BenchRow>, EvalError> {
    let ds = Dataset::new(x.clone(), None, (0..x.cols()).map(|c| format!("c{c}")).collect())?;
    parties
        .iter()
        .map(|&m| {
            let parts = partition_horizontal(&ds, m as usize, seed)?.into_iter().map(|d| d.features).collect();
            let cfg = SessionConfig { parties: m, ..session.clone() };
            let start = Instant::now();
            let outcome = run_session(&cfg, parts)?;
            let seconds = start.elapsed().as_secs_f64();
            let t = &outcome.transcript;
            let counts = MessageType::ALL.into_iter().map(|ty| (ty, t.count(ty))).filter(|(_, n)| *n > 0).collect();
            let mut sent_by = BTreeMap::new();
            for msg in t.messages() {
                *sent_by.entry(msg.sender).or_default() += 1;
            }
            Ok(BenchRow {
                parties: m,
                method: cfg.method,
                seconds,
                messages: t.len(),
                counts,
                sent_by,
                transcript: outcome.transcript,
            })
        })
        .collect()
}

pub fn format_bench(rows: &[BenchRow]) -> String {
    let header: Vec<String> =
        ["method", "parties", "seconds", "messages", "max per party"].iter().map(|s| s.to_string()).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.method.to_string(),
                r.parties.to_string(),
                format!("{:.3}", r.seconds),
                r.messages.to_string(),
                r.sent_by.values().max().copied().unwrap_or(0).to_string(),
            ]
        })
        .collect();
    table(&header, &body)
}
