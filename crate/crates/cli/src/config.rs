//! Run configuration: one JSON document, overridable from the command line.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use transkrig::benchmarks::{self, Benchmark};
use transkrig::experiment::{ExperimentConfig, GradMode, Selection};
use transkrig::optimize::OptimizerConfig;
use transkrig::trend::TrendKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Token {
    Id(u8),
    Name(String),
}

/// `"all"` or an explicit list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Selector {
    Keyword(String),
    List(Vec<Token>),
}

impl Default for Selector {
    fn default() -> Self {
        Selector::Keyword("all".into())
    }
}

impl Selector {
    /// Parses a command-line value: `all` or a comma-separated list.
    pub fn parse_flag(s: &str) -> Selector {
        if s.trim() == "all" {
            return Selector::default();
        }
        Selector::List(
            s.split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| t.parse().map(Token::Id).unwrap_or_else(|_| Token::Name(t.to_string())))
                .collect(),
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradChoice {
    #[default]
    Analytic,
    Fd,
    Both,
}

impl GradChoice {
    pub fn modes(self) -> Vec<GradMode> {
        match self {
            GradChoice::Analytic => vec![GradMode::Analytic],
            GradChoice::Fd => vec![GradMode::Fd],
            GradChoice::Both => vec![GradMode::Analytic, GradMode::Fd],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    pub max_iters: usize,
    pub memory: usize,
    pub grad_tol: f64,
    pub f_tol: f64,
    pub fd_step: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        OptimizerSettings {
            max_iters: d.max_iters,
            memory: d.memory,
            grad_tol: d.grad_tol,
            f_tol: d.f_tol,
            fd_step: d.fd_step,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub benchmarks: Selector,
    pub methods: Selector,
    /// Absolute training size; `n_per_dim · p` when absent.
    pub n: Option<usize>,
    pub n_per_dim: usize,
    pub n_val: usize,
    pub reps: usize,
    pub restarts: usize,
    pub seed: u64,
    pub grad_mode: GradChoice,
    pub selection: Selection,
    pub lhs_budget: usize,
    pub optimizer: OptimizerSettings,
    pub out_dir: PathBuf,
    pub plots: bool,
    /// Write measured fit times into records.csv. Off by default so that
    /// records.csv is byte-reproducible; timings.csv always has them.
    pub timings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        RunConfig {
            benchmarks: Selector::default(),
            methods: Selector::default(),
            n: None,
            n_per_dim: e.n_per_dim,
            n_val: e.n_val,
            reps: e.reps,
            restarts: e.optimizer.restarts,
            seed: 0,
            grad_mode: GradChoice::Analytic,
            selection: e.selection,
            lhs_budget: e.lhs_budget,
            optimizer: OptimizerSettings::default(),
            out_dir: PathBuf::from("results"),
            plots: false,
            timings: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.resolve_benchmarks()?;
        self.resolve_methods()?;
        if self.reps == 0 || self.restarts == 0 {
            return Err("reps and restarts must be at least 1".into());
        }
        if self.n_val < 2 {
            return Err("n_val must be at least 2".into());
        }
        if self.n == Some(0) || (self.n.is_none() && self.n_per_dim == 0) {
            return Err("training size must be positive".into());
        }
        Ok(())
    }

    pub fn resolve_benchmarks(&self) -> Result<Vec<&'static Benchmark>, String> {
        match &self.benchmarks {
            Selector::Keyword(k) if k == "all" => Ok(benchmarks::registry().iter().collect()),
            Selector::Keyword(k) => Err(format!("benchmarks: expected \"all\" or a list, got \"{k}\"")),
            Selector::List(list) if list.is_empty() => Err("benchmarks: empty selection".into()),
            Selector::List(list) => list
                .iter()
                .map(|t| match t {
                    Token::Id(id) => benchmarks::get(*id),
                    Token::Name(name) => benchmarks::lookup(name),
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| format!("benchmarks: {e}")),
        }
    }

    pub fn resolve_methods(&self) -> Result<Vec<TrendKind>, String> {
        match &self.methods {
            Selector::Keyword(k) if k == "all" => Ok(TrendKind::ALL.to_vec()),
            Selector::Keyword(k) => Err(format!("methods: expected \"all\" or a list, got \"{k}\"")),
            Selector::List(list) if list.is_empty() => Err("methods: empty selection".into()),
            Selector::List(list) => list
                .iter()
                .map(|t| match t {
                    Token::Name(name) => name.parse::<TrendKind>().map_err(|e| format!("methods: {e}")),
                    Token::Id(id) => Err(format!("methods: expected a method token, got {id}")),
                })
                .collect(),
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            n_per_dim: self.n_per_dim,
            n: self.n,
            n_val: self.n_val,
            reps: self.reps,
            selection: self.selection,
            lhs_budget: self.lhs_budget,
            optimizer: OptimizerConfig {
                restarts: self.restarts,
                max_iters: self.optimizer.max_iters,
                memory: self.optimizer.memory,
                grad_tol: self.optimizer.grad_tol,
                f_tol: self.optimizer.f_tol,
                fd_step: self.optimizer.fd_step,
                ..OptimizerConfig::default()
            },
        }
    }

    /// Settings that determine the results, i.e. everything except where
    /// and whether plots are written.
    pub fn provenance(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("out_dir");
            obj.remove("plots");
        }
        v
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.provenance().to_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
