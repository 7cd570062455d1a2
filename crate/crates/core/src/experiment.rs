//! Validation metric and the benchmark-grid protocol.
//!
//! Each repetition draws a maximin LHS in the uniform space, maps it to the
//! physical space for evaluation, fits every restart and keeps the restart
//! with the lowest validation NMSE. Seeds are derived hierarchically
//! (master → benchmark → repetition → stream), so every method and both
//! gradient arms see the same designs and validation sets.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::Benchmark;
use crate::design::{maximin_lhs, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::gp::{default_bounds, training_problem, FittedModel};
use crate::kernel::HyperParams;
use crate::optimize::{maximize, OptimizerConfig, RestartReport};
use crate::trend::TrendKind;

/// Mean squared error normalized by the sample variance of `y_val`.
pub fn nmse(y_val: &DVector<f64>, predicted: &DVector<f64>) -> Result<f64> {
    let n = y_val.len();
    if predicted.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: predicted.len(),
        });
    }
    if n < 2 {
        return Err(Error::InvalidParameter("NMSE needs at least two validation points".into()));
    }
    let mean = y_val.mean();
    let var = y_val.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let mse = y_val.iter().zip(predicted.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
    Ok(mse / var)
}

/// NMSE of a fitted model's mean prediction at the uniform-space points `u_val`.
pub fn model_nmse(model: &FittedModel, u_val: &DMatrix<f64>, y_val: &DVector<f64>) -> Result<f64> {
    nmse(y_val, &model.predict(u_val)?.mean)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradMode {
    Analytic,
    Fd,
}

impl GradMode {
    pub fn token(self) -> &'static str {
        match self {
            GradMode::Analytic => "analytic",
            GradMode::Fd => "fd",
        }
    }
}

impl std::str::FromStr for GradMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(GradMode::Analytic),
            "fd" => Ok(GradMode::Fd),
            _ => Err(Error::UnknownToken(s.to_string())),
        }
    }
}

/// How the reported model is chosen among restart optima.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    ValidationNmse,
    Likelihood,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Training points per input dimension.
    pub n_per_dim: usize,
    /// Absolute training size; overrides `n_per_dim`.
    pub n: Option<usize>,
    pub n_val: usize,
    pub reps: usize,
    pub selection: Selection,
    pub lhs_budget: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_per_dim: 10,
            n: None,
            n_val: 1000,
            reps: 10,
            selection: Selection::ValidationNmse,
            lhs_budget: DEFAULT_BUDGET,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn training_size(&self, p: usize) -> usize {
        self.n.unwrap_or(self.n_per_dim * p)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub benchmark: u8,
    pub method: TrendKind,
    pub rep: usize,
    pub seed: u64,
    pub grad_mode: GradMode,
    pub nmse: f64,
    /// Optimization wall time summed over all restarts.
    pub fit_seconds: f64,
    pub n: usize,
    pub n_val: usize,
    pub restarts: usize,
    #[serde(skip)]
    pub detail: Option<RecordDetail>,
}

#[derive(Clone, Debug)]
pub struct RecordDetail {
    pub selected_restart: usize,
    pub lml: f64,
    pub hyperparameters: HyperParams,
    pub restart_nmse: Vec<Option<f64>>,
    pub restarts: Vec<RestartReport>,
}

impl RecordDetail {
    pub fn evaluations(&self) -> usize {
        self.restarts.iter().map(|r| r.evaluations).sum()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Failure {
    pub benchmark: u8,
    pub method: TrendKind,
    pub rep: usize,
    pub seed: u64,
    pub grad_mode: GradMode,
    pub error: String,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentOutcome {
    pub records: Vec<ExperimentRecord>,
    pub failures: Vec<Failure>,
}

/// SplitMix64 finalizer applied to a parent seed and a child index.
pub fn derive_seed(parent: u64, child: u64) -> u64 {
    let mut z = parent ^ child.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one repetition of one benchmark.
pub fn repetition_seed(master: u64, benchmark: u8, rep: usize) -> u64 {
    derive_seed(derive_seed(master, benchmark as u64), rep as u64)
}

const STREAM_DESIGN: u64 = 0;
const STREAM_VALIDATION: u64 = 1;
const STREAM_RESTARTS: u64 = 2;

/// Training and validation data of one repetition.
#[derive(Clone, Debug)]
pub struct RepetitionData {
    pub u: DMatrix<f64>,
    pub y: DVector<f64>,
    pub u_val: DMatrix<f64>,
    pub y_val: DVector<f64>,
}

pub fn repetition_data(bench: &Benchmark, config: &ExperimentConfig, seed: u64) -> Result<RepetitionData> {
    let p = bench.dim();
    let n = config.training_size(p);
    let design = maximin_lhs(n, p, derive_seed(seed, STREAM_DESIGN), config.lhs_budget)?;
    let x = bench.input_model.inverse_rows(&design.points)?;
    let y = bench.evaluate_rows(&x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_VALIDATION));
    let (u_val, x_val) = bench.input_model.sample_with_uniform(&mut rng, config.n_val)?;
    let y_val = bench.evaluate_rows(&x_val)?;
    Ok(RepetitionData {
        u: design.points,
        y,
        u_val,
        y_val,
    })
}

/// Fits one method on one repetition's data.
pub fn fit_repetition(
    bench: &Benchmark,
    method: TrendKind,
    grad_mode: GradMode,
    config: &ExperimentConfig,
    data: &RepetitionData,
    seed: u64,
) -> Result<(f64, f64, RecordDetail)> {
    let model = bench.input_model.clone();
    let problem = training_problem(&data.u, &data.y, method, Some(&model))?;
    let bounds = default_bounds(data.u.ncols(), &data.y)?;
    let opt = OptimizerConfig {
        fd_mode: grad_mode == GradMode::Fd,
        ..config.optimizer.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_RESTARTS));
    let start = Instant::now();
    let result = maximize(&problem, &bounds, &opt, &mut rng)?;
    let fit_seconds = start.elapsed().as_secs_f64();

    let mut best: Option<(usize, f64, FittedModel)> = None;
    let mut restart_nmse = Vec::with_capacity(result.restarts.len());
    for r in &result.restarts {
        let scored = if r.succeeded() {
            HyperParams::from_log_vec(&r.params)
                .and_then(|hp| FittedModel::new(data.u.clone(), data.y.clone(), method, Some(model.clone()), hp, problem.jitter))
                .and_then(|fm| Ok((model_nmse(&fm, &data.u_val, &data.y_val)?, fm)))
                .ok()
                .filter(|(e, _)| e.is_finite())
        } else {
            None
        };
        restart_nmse.push(scored.as_ref().map(|(e, _)| *e));
        if let Some((e, fm)) = scored {
            let better = match (&best, config.selection) {
                (None, _) => true,
                (Some((_, be, _)), Selection::ValidationNmse) => e < *be,
                (Some((_, _, bm)), Selection::Likelihood) => fm.lml() > bm.lml(),
            };
            if better {
                best = Some((r.index, e, fm));
            }
        }
    }
    let (selected, err, fm) =
        best.ok_or_else(|| Error::AllRestartsFailed("no restart produced a usable model".into()))?;
    Ok((
        err,
        fit_seconds,
        RecordDetail {
            selected_restart: selected,
            lml: fm.lml(),
            hyperparameters: fm.hp.clone(),
            restart_nmse,
            restarts: result.restarts,
        },
    ))
}

/// One grid cell: a benchmark, a method and a gradient mode over all repetitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub benchmark: u8,
    pub method: TrendKind,
    pub grad_mode: GradMode,
}

/// Runs every repetition of one benchmark/method/gradient-mode cell.
pub fn run_experiment(
    bench: &Benchmark,
    method: TrendKind,
    grad_mode: GradMode,
    config: &ExperimentConfig,
    master_seed: u64,
) -> ExperimentOutcome {
    run_grid(&[bench], &[method], &[grad_mode], config, master_seed, false)
}

/// Runs the full grid. Repetitions run in parallel on the current rayon pool
/// when `parallel` is set; output order is independent of scheduling.
pub fn run_grid(
    benches: &[&Benchmark],
    methods: &[TrendKind],
    grad_modes: &[GradMode],
    config: &ExperimentConfig,
    master_seed: u64,
    parallel: bool,
) -> ExperimentOutcome {
    // data generation is shared by all methods and arms of a repetition
    let reps: Vec<(&Benchmark, usize)> =
        benches.iter().flat_map(|&b| (0..config.reps).map(move |r| (b, r))).collect();
    let work = |&(bench, rep): &(&Benchmark, usize)| -> Vec<(usize, std::result::Result<ExperimentRecord, Failure>)> {
        let seed = repetition_seed(master_seed, bench.id, rep);
        let data = repetition_data(bench, config, seed);
        let mut out = Vec::new();
        for (mi, &method) in methods.iter().enumerate() {
            for (gi, &grad_mode) in grad_modes.iter().enumerate() {
                let order = mi * grad_modes.len() + gi;
                let res = data
                    .as_ref()
                    .map_err(|e| Error::InvalidParameter(e.to_string()))
                    .and_then(|d| fit_repetition(bench, method, grad_mode, config, d, seed));
                let n = config.training_size(bench.dim());
                let item = match res {
                    Ok((nmse, fit_seconds, detail)) => Ok(ExperimentRecord {
                        benchmark: bench.id,
                        method,
                        rep,
                        seed,
                        grad_mode,
                        nmse,
                        fit_seconds,
                        n,
                        n_val: config.n_val,
                        restarts: detail.restarts.len(),
                        detail: Some(detail),
                    }),
                    Err(e) => {
                        log::warn!("#{} {} rep {} ({}) failed: {e}", bench.id, method, rep, grad_mode.token());
                        Err(Failure {
                            benchmark: bench.id,
                            method,
                            rep,
                            seed,
                            grad_mode,
                            error: e.to_string(),
                        })
                    }
                };
                out.push((order, item));
            }
        }
        out
    };
    let per_rep: Vec<_> = if parallel {
        reps.par_iter().map(work).collect()
    } else {
        reps.iter().map(work).collect()
    };

    // order: benchmark, method, grad mode, repetition
    let mut items: Vec<((usize, usize, usize), std::result::Result<ExperimentRecord, Failure>)> = Vec::new();
    for (ri, results) in per_rep.into_iter().enumerate() {
        let bench_index = ri / config.reps.max(1);
        let rep = ri % config.reps.max(1);
        for (order, item) in results {
            items.push(((bench_index, order, rep), item));
        }
    }
    items.sort_by_key(|(k, _)| *k);
    let mut outcome = ExperimentOutcome::default();
    for (_, item) in items {
        match item {
            Ok(r) => outcome.records.push(r),
            Err(f) => outcome.failures.push(f),
        }
    }
    outcome
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation; 0 when undefined.
    pub std: f64,
    pub std_defined: bool,
    pub median: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_defined = n > 1;
        let std = if std_defined {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stats {
            mean,
            std,
            std_defined,
            median: median(values),
        })
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub benchmark: u8,
    pub method: TrendKind,
    pub grad_mode: GradMode,
    pub count: usize,
    pub nmse: Stats,
    /// Absent when the records carry no timings.
    pub fit_seconds: Option<Stats>,
}

/// Per-cell statistics, ordered by benchmark, method and gradient mode.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<CellSummary> {
    let mut cells: BTreeMap<(u8, TrendKind, GradMode), Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records {
        cells.entry((r.benchmark, r.method, r.grad_mode)).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((benchmark, method, grad_mode), rs)| {
            let errs: Vec<f64> = rs.iter().map(|r| r.nmse).collect();
            let times: Vec<f64> = rs.iter().map(|r| r.fit_seconds).filter(|t| t.is_finite()).collect();
            CellSummary {
                benchmark,
                method,
                grad_mode,
                count: rs.len(),
                nmse: Stats::of(&errs).expect("nonempty cell"),
                fit_seconds: if times.len() == rs.len() { Stats::of(&times) } else { None },
            }
        })
        .collect()
}

pub const CSV_COLUMNS: [&str; 10] =
    ["benchmark", "method", "rep", "seed", "grad_mode", "nmse", "fit_seconds", "n", "n_val", "restarts"];

/// Writes records with `#`-prefixed metadata lines. With `timings` unset the
/// `fit_seconds` column holds `NA`, which makes the file a pure function of
/// the configuration.
pub fn write_records_csv<W: Write>(
    mut out: W,
    records: &[ExperimentRecord],
    metadata: &[(String, String)],
    timings: bool,
) -> Result<()> {
    for (k, v) in metadata {
        writeln!(out, "# {k}: {v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        let secs = if timings { format!("{}", r.fit_seconds) } else { "NA".to_string() };
        w.write_record([
            r.benchmark.to_string(),
            r.method.token().to_string(),
            r.rep.to_string(),
            r.seed.to_string(),
            r.grad_mode.token().to_string(),
            format!("{}", r.nmse),
            secs,
            r.n.to_string(),
            r.n_val.to_string(),
            r.restarts.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a records file; `NA` timings become NaN. Missing columns are an error.
pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<ExperimentRecord>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers = rdr.headers()?.clone();
    let mut index = Vec::with_capacity(CSV_COLUMNS.len());
    for col in CSV_COLUMNS {
        let i = headers
            .iter()
            .position(|h| h.trim() == col)
            .ok_or_else(|| Error::InvalidParameter(format!("missing column '{col}'")))?;
        index.push(i);
    }
    let parse_err = |col: &str, v: &str| Error::InvalidParameter(format!("bad value '{v}' in column '{col}'"));
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let get = |k: usize| row.get(index[k]).unwrap_or("").trim();
        let num = |k: usize| -> Result<f64> {
            match get(k) {
                "NA" => Ok(f64::NAN),
                v => v.parse().map_err(|_| parse_err(CSV_COLUMNS[k], v)),
            }
        };
        let int = |k: usize| -> Result<u64> { get(k).parse().map_err(|_| parse_err(CSV_COLUMNS[k], get(k))) };
        records.push(ExperimentRecord {
            benchmark: int(0)? as u8,
            method: get(1).parse()?,
            rep: int(2)? as usize,
            seed: int(3)?,
            grad_mode: get(4).parse()?,
            nmse: num(5)?,
            fit_seconds: num(6)?,
            n: int(7)? as usize,
            n_val: int(8)? as usize,
            restarts: int(9)? as usize,
            detail: None,
        });
    }
    Ok(records)
}

/// Worst gradient disagreement for one trend kind and dimension.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradientSweepRow {
    pub kind: TrendKind,
    pub p: usize,
    pub n: usize,
    pub draws: usize,
    pub max_relative_error: f64,
}

/// Relative errors below this magnitude floor are measured absolutely.
pub const GRADIENT_ERROR_FLOOR: f64 = 1e-3;

/// Input model and response used for gradient checks in dimension `p`:
/// the benchmark of that dimension when there is one.
fn sweep_geometry(p: usize) -> Result<(std::sync::Arc<crate::input_model::JointInputModel>, Box<dyn Fn(&[f64]) -> Result<f64>>)> {
    let id = match p {
        1 => Some(1),
        2 => Some(3),
        3 => Some(4),
        8 => Some(6),
        9 => Some(7),
        15 => Some(9),
        _ => None,
    };
    if let Some(id) = id {
        let b = crate::benchmarks::get(id)?;
        return Ok((b.input_model.clone(), Box::new(move |x| b.evaluate(x))));
    }
    let marginals = vec![crate::distributions::Marginal::normal(0.0, 1.0)?; p];
    let model = std::sync::Arc::new(crate::input_model::JointInputModel::independent(marginals)?);
    Ok((model, Box::new(|x: &[f64]| Ok(x.iter().map(|v| v + v.sin()).sum()))))
}

/// Compares analytic likelihood gradients with finite differences for every
/// trend kind at `n = 10p`, over `draws` random hyperparameter sets.
pub fn gradient_sweep(
    dims: &[usize],
    draws: usize,
    seed: u64,
    fault: Option<crate::gp::GradientFault>,
) -> Result<Vec<GradientSweepRow>> {
    use rand::Rng;
    let mut rows = Vec::new();
    for &p in dims {
        if p == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        let (model, f) = sweep_geometry(p)?;
        let n = 10 * p;
        let design = maximin_lhs(n, p, derive_seed(seed, p as u64), DEFAULT_BUDGET)?;
        let x = model.inverse_rows(&design.points)?;
        let y = DVector::from_iterator(n, (0..n).map(|r| f(&x.row(r).iter().copied().collect::<Vec<_>>())).collect::<Result<Vec<_>>>()?);
        let var = y.variance() * n as f64 / (n - 1) as f64;
        let ls_scale = (p as f64).sqrt().max(1.0);
        for kind in TrendKind::ALL {
            let problem = training_problem(&design.points, &y, kind, Some(&model))?.with_fault(fault);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed ^ 0x5eed, (p * 16 + kind as usize) as u64));
            let mut worst: f64 = 0.0;
            for _ in 0..draws {
                let amp = var * rng.random_range(-1.0f64..1.0).exp();
                let ls: Vec<f64> = (0..p).map(|_| 0.5 * ls_scale * rng.random_range((0.2f64).ln()..(2.0f64).ln()).exp()).collect();
                let noise = var.sqrt() * rng.random_range((1e-2f64).ln()..(1e-1f64).ln()).exp();
                let hp = HyperParams::new(amp, &ls, noise);
                let check = crate::gp::check_gradient(&problem, &hp, 1e-4)?;
                worst = worst.max(check.max_relative_error(GRADIENT_ERROR_FLOOR));
            }
            rows.push(GradientSweepRow {
                kind,
                p,
                n,
                draws,
                max_relative_error: worst,
            });
        }
    }
    Ok(rows)
}
