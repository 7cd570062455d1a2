//! Command implementations behind the `transkrig` binary.

pub mod config;
pub mod plot;
pub mod table;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use transkrig::experiment::{
    gradient_sweep, read_records_csv, run_grid, summarize, write_records_csv, ExperimentRecord, GradMode,
};
use transkrig::gp::GradientFault;
use transkrig::trend::TrendKind;

use config::{RunConfig, Selector};
use plot::GroupedBars;
use table::NmseTable;

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const OUT_DIR_ENV: &str = "TRANSKRIG_OUT_DIR";
pub const GRADIENT_TOLERANCE: f64 = 1e-5;

#[derive(Parser, Debug)]
#[command(name = "transkrig", version, about = "Universal kriging with transformed trend functions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a benchmark × method grid and write records, summary and plots.
    Run(RunArgs),
    /// Compare analytic likelihood gradients with finite differences.
    ValidateGradients(GradientArgs),
    /// Render the mean-NMSE table from a records file.
    Table(TableArgs),
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// JSON run configuration; protocol defaults when omitted.
    pub config: Option<PathBuf>,
    /// Benchmark ids or names, comma separated, or `all`.
    #[arg(long)]
    pub benchmarks: Option<String>,
    /// Method tokens, comma separated, or `all`.
    #[arg(long)]
    pub methods: Option<String>,
    /// Training size (default 10 per input dimension).
    #[arg(long)]
    pub n: Option<usize>,
    /// Validation sample size.
    #[arg(long)]
    pub n_val: Option<usize>,
    /// Repetitions per cell.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Optimizer restarts per fit.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// analytic, fd or both.
    #[arg(long)]
    pub grad_mode: Option<String>,
    /// Restart selection rule: validation_nmse or likelihood.
    #[arg(long)]
    pub selection: Option<String>,
    /// Output directory (overrides the config file and TRANSKRIG_OUT_DIR).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for repetitions.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Also write nmse.svg and runtime.svg.
    #[arg(long)]
    pub plots: bool,
    /// Write measured fit times into records.csv instead of `NA`. The run is
    /// then no longer byte-reproducible.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Args, Debug)]
pub struct GradientArgs {
    /// Input dimensions to check, comma separated.
    #[arg(long, default_value = "1,3,8,9,15")]
    pub dims: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random hyperparameter draws per trend kind and dimension.
    #[arg(long, default_value_t = 5)]
    pub draws: usize,
    #[arg(long, hide = true)]
    pub inject_sign_error: bool,
}

#[derive(Args, Debug)]
pub struct TableArgs {
    pub records: PathBuf,
    /// Markdown output; defaults to table.md next to the records file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "analytic")]
    pub grad_mode: String,
}

pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::ValidateGradients(args) => cmd_validate_gradients(&args),
        Command::Table(args) => cmd_table(&args),
    }
}

/// Builds the effective configuration: file, then environment, then flags.
pub fn resolve_run_config(args: &RunArgs) -> Result<RunConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            RunConfig::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
        if !dir.is_empty() {
            cfg.out_dir = dir.into();
        }
    }
    if let Some(b) = &args.benchmarks {
        cfg.benchmarks = Selector::parse_flag(b);
    }
    if let Some(m) = &args.methods {
        cfg.methods = Selector::parse_flag(m);
    }
    if args.n.is_some() {
        cfg.n = args.n;
    }
    if let Some(v) = args.n_val {
        cfg.n_val = v;
    }
    if let Some(v) = args.reps {
        cfg.reps = v;
    }
    if let Some(v) = args.restarts {
        cfg.restarts = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(g) = &args.grad_mode {
        cfg.grad_mode = serde_json::from_value(serde_json::Value::String(g.clone()))
            .map_err(|_| format!("grad mode must be analytic, fd or both, got '{g}'"))?;
    }
    if let Some(sel) = &args.selection {
        cfg.selection = serde_json::from_value(serde_json::Value::String(sel.clone()))
            .map_err(|_| format!("unknown selection rule '{sel}'"))?;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    cfg.plots |= args.plots;
    cfg.timings |= args.timings;
    cfg.validate()?;
    Ok(cfg)
}

fn metadata(cfg: &RunConfig, jobs: usize) -> Vec<(String, String)> {
    vec![
        ("tool".into(), format!("transkrig {}", env!("CARGO_PKG_VERSION"))),
        ("master_seed".into(), cfg.seed.to_string()),
        ("config_hash".into(), cfg.hash()),
        ("jobs".into(), jobs.to_string()),
        ("restarts_parallel".into(), "false".into()),
        ("config".into(), cfg.provenance().to_string()),
    ]
}

pub fn cmd_run(args: &RunArgs) -> i32 {
    let cfg = match resolve_run_config(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if args.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return EXIT_USAGE;
    }
    match run_and_write(&cfg, args.jobs) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn run_and_write(cfg: &RunConfig, jobs: usize) -> Result<i32, Box<dyn std::error::Error>> {
    let benches = cfg.resolve_benchmarks()?;
    let methods = cfg.resolve_methods()?;
    let modes = cfg.grad_mode.modes();
    let experiment = cfg.experiment();
    eprintln!(
        "running {} benchmark(s) x {} method(s) x {} gradient mode(s) x {} repetition(s), {} restarts each",
        benches.len(),
        methods.len(),
        modes.len(),
        cfg.reps,
        cfg.restarts
    );
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let outcome = pool.install(|| run_grid(&benches, &methods, &modes, &experiment, cfg.seed, jobs > 1));

    fs::create_dir_all(&cfg.out_dir)?;
    let meta = metadata(cfg, jobs);
    let records_path = cfg.out_dir.join("records.csv");
    write_records_csv(fs::File::create(&records_path)?, &outcome.records, &meta, cfg.timings)?;
    write_timings(&cfg.out_dir.join("timings.csv"), &outcome.records)?;
    let summary = serde_json::json!({
        "tool": format!("transkrig {}", env!("CARGO_PKG_VERSION")),
        "master_seed": cfg.seed,
        "config_hash": cfg.hash(),
        "jobs": jobs,
        "config": cfg.provenance(),
        "cells": summarize(&outcome.records),
        "failures": outcome.failures,
    });
    fs::write(cfg.out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    if cfg.plots {
        write_plots(&cfg.out_dir, &outcome.records)?;
    }
    for f in &outcome.failures {
        eprintln!("failed: #{} {} rep {} ({}): {}", f.benchmark, f.method, f.rep, f.grad_mode.token(), f.error);
    }
    eprintln!(
        "wrote {} record(s) to {} ({} failure(s))",
        outcome.records.len(),
        records_path.display(),
        outcome.failures.len()
    );
    Ok(if outcome.records.is_empty() { EXIT_RUNTIME } else { 0 })
}

fn write_timings(path: &Path, records: &[ExperimentRecord]) -> std::io::Result<()> {
    let mut text = String::from("benchmark,method,rep,grad_mode,fit_seconds\n");
    for r in records {
        text.push_str(&format!("{},{},{},{},{}\n", r.benchmark, r.method.token(), r.rep, r.grad_mode.token(), r.fit_seconds));
    }
    fs::write(path, text)
}

fn cell_mean(records: &[ExperimentRecord], b: u8, m: TrendKind, g: GradMode, f: fn(&ExperimentRecord) -> f64) -> Option<f64> {
    let v: Vec<f64> = records
        .iter()
        .filter(|r| r.benchmark == b && r.method == m && r.grad_mode == g)
        .map(f)
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn write_plots(dir: &Path, records: &[ExperimentRecord]) -> std::io::Result<()> {
    let mut benches: Vec<u8> = records.iter().map(|r| r.benchmark).collect();
    benches.sort();
    benches.dedup();
    let mut methods: Vec<TrendKind> = records.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let groups: Vec<String> = benches.iter().map(|b| format!("#{b}")).collect();

    let nmse = GroupedBars {
        title: "Validation NMSE (mean over repetitions)".into(),
        y_label: "NMSE".into(),
        groups: groups.clone(),
        series: methods.iter().map(|m| m.label().to_string()).collect(),
        values: methods
            .iter()
            .map(|&m| benches.iter().map(|&b| cell_mean(records, b, m, GradMode::Analytic, |r| r.nmse)).collect())
            .collect(),
    };
    fs::write(dir.join("nmse.svg"), nmse.to_svg())?;

    let mut series = Vec::new();
    let mut values = Vec::new();
    for g in [GradMode::Analytic, GradMode::Fd] {
        for &m in &methods {
            let v: Vec<Option<f64>> = benches.iter().map(|&b| cell_mean(records, b, m, g, |r| r.fit_seconds)).collect();
            if v.iter().any(|x| x.is_some()) {
                series.push(format!("{} ({})", m.label(), g.token()));
                values.push(v);
            }
        }
    }
    let runtime = GroupedBars {
        title: "Hyperparameter optimization time (mean over repetitions)".into(),
        y_label: "seconds".into(),
        groups,
        series,
        values,
    };
    fs::write(dir.join("runtime.svg"), runtime.to_svg())
}

pub fn cmd_validate_gradients(args: &GradientArgs) -> i32 {
    let dims: Result<Vec<usize>, _> = args
        .dims
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse::<usize>)
        .collect();
    let dims = match dims {
        Ok(d) if !d.is_empty() && d.iter().all(|&p| p > 0) => d,
        _ => {
            eprintln!("error: --dims needs a nonempty list of positive dimensions");
            return EXIT_USAGE;
        }
    };
    if args.draws == 0 {
        eprintln!("error: --draws must be at least 1");
        return EXIT_USAGE;
    }
    let fault = args.inject_sign_error.then_some(GradientFault::FlipAmplitudeSign);
    let rows = match gradient_sweep(&dims, args.draws, args.seed, fault) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    println!("{:<12} {:>3} {:>5} {:>14}  result", "kind", "p", "n", "max rel. err");
    let mut ok = true;
    for r in &rows {
        let pass = r.max_relative_error < GRADIENT_TOLERANCE;
        ok &= pass;
        println!(
            "{:<12} {:>3} {:>5} {:>14.3e}  {}",
            r.kind.token(),
            r.p,
            r.n,
            r.max_relative_error,
            if pass { "ok" } else { "FAIL" }
        );
    }
    if ok {
        0
    } else {
        EXIT_RUNTIME
    }
}

pub fn cmd_table(args: &TableArgs) -> i32 {
    let grad_mode: GradMode = match args.grad_mode.parse() {
        Ok(g) => g,
        Err(_) => {
            eprintln!("error: grad mode must be analytic or fd");
            return EXIT_USAGE;
        }
    };
    let file = match fs::File::open(&args.records) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {}: {e}", args.records.display());
            return EXIT_USAGE;
        }
    };
    let records = match read_records_csv(file) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", args.records.display());
            return EXIT_USAGE;
        }
    };
    if records.is_empty() {
        eprintln!("error: {}: no records", args.records.display());
        return EXIT_USAGE;
    }
    let table = NmseTable::from_records(&records, grad_mode);
    print!("{}", table.render_text());
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.records.parent().unwrap_or(Path::new(".")).join("table.md"));
    if let Err(e) = fs::write(&out, table.render_markdown()) {
        eprintln!("error: {}: {e}", out.display());
        return EXIT_RUNTIME;
    }
    0
}
