//! Simple, ordinary and universal kriging.

mod likelihood;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use likelihood::{
    lml_grad_simple, lml_grad_universal, lml_simple, lml_universal, GradientFault, GradientWorkspace,
    LikelihoodState, LmlProblem, TrendFactor, TrendState,
};

use crate::error::{Error, Result};
use crate::input_model::JointInputModel;
use crate::kernel::{cross_kernel, HyperParams, JitterPolicy};
use crate::optimize::{maximize, Maximization, Objective, OptimizerConfig};
use crate::trend::{basis_eval, TrendKind, TrendSpec};

pub const FORMAT_VERSION: u32 = 1;

impl Objective for LmlProblem {
    fn dim(&self) -> usize {
        self.p() + 2
    }

    fn value(&self, x: &[f64]) -> Option<f64> {
        let hp = HyperParams::from_log_vec(x).ok()?;
        LmlProblem::value(self, &hp).ok()
    }

    fn value_and_gradient(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let hp = HyperParams::from_log_vec(x).ok()?;
        LmlProblem::value_and_gradient(self, &hp).ok()
    }
}

fn sample_std(y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let mean = y.mean();
    (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

/// Log-space box `[log θ₀, log θ₁ … log θ_p, log σₙ]` scaled by the data.
pub fn default_bounds(p: usize, y: &DVector<f64>) -> Result<Vec<(f64, f64)>> {
    let std = sample_std(y);
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::ZeroVariance);
    }
    let var = std * std;
    let mut b = Vec::with_capacity(p + 2);
    b.push(((1e-4 * var).ln(), (1e4 * var).ln()));
    b.extend(std::iter::repeat_n((1e-2f64.ln(), 1e1f64.ln()), p));
    b.push(((1e-8 * std).ln(), std.ln()));
    Ok(b)
}

/// Smallest admissible noise standard deviation for data `y`.
pub fn noise_floor(y: &DVector<f64>) -> f64 {
    1e-8 * sample_std(y)
}

/// Likelihood problem for training data and a trend family.
pub fn training_problem(
    u: &DMatrix<f64>,
    y: &DVector<f64>,
    trend: TrendKind,
    model: Option<&JointInputModel>,
) -> Result<LmlProblem> {
    let spec = TrendSpec::new(trend, u.ncols());
    let h = basis_eval(&spec, model, u)?;
    LmlProblem::new(u.clone(), y.clone(), h)
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
    /// Number of variances that came out negative and were set to zero.
    pub clamped: usize,
}

#[derive(Clone, Debug)]
pub struct FittedModel {
    pub trend: TrendSpec,
    pub hp: HyperParams,
    pub u: DMatrix<f64>,
    pub y: DVector<f64>,
    pub h: DMatrix<f64>,
    pub input_model: Option<Arc<JointInputModel>>,
    pub jitter_policy: JitterPolicy,
    state: LikelihoodState,
}

impl FittedModel {
    /// Caches all factors at fixed hyperparameters.
    pub fn new(
        u: DMatrix<f64>,
        y: DVector<f64>,
        trend: TrendKind,
        input_model: Option<Arc<JointInputModel>>,
        hp: HyperParams,
        jitter_policy: JitterPolicy,
    ) -> Result<Self> {
        let spec = TrendSpec::new(trend, u.ncols());
        let h = basis_eval(&spec, input_model.as_deref(), &u)?;
        let problem = LmlProblem::new(u, y, h)?.with_jitter(jitter_policy);
        let state = problem.state(&hp)?;
        Ok(FittedModel {
            trend: spec,
            hp,
            u: problem.u,
            y: problem.y,
            h: problem.h,
            input_model,
            jitter_policy,
            state,
        })
    }

    pub fn lml(&self) -> f64 {
        self.state.lml
    }

    pub fn jitter(&self) -> f64 {
        self.state.factor.jitter
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.state.alpha
    }

    /// Lower Cholesky factor of `K_y`.
    pub fn l_k(&self) -> DMatrix<f64> {
        self.state.factor.chol.l()
    }

    /// `K_y⁻¹ Hᵀ` (`n × q`).
    pub fn gamma(&self) -> DMatrix<f64> {
        match &self.state.trend {
            Some(t) => t.gamma.clone(),
            None => DMatrix::zeros(self.u.nrows(), 0),
        }
    }

    /// Generalized least-squares trend coefficients (empty for simple kriging).
    pub fn mu(&self) -> DVector<f64> {
        match &self.state.trend {
            Some(t) => t.mu.clone(),
            None => DVector::zeros(0),
        }
    }

    /// Lower Cholesky factor of `A = H K_y⁻¹ Hᵀ`.
    pub fn l_eta(&self) -> DMatrix<f64> {
        match &self.state.trend {
            Some(t) => t.factor.lower(),
            None => DMatrix::zeros(0, 0),
        }
    }

    pub fn predict(&self, ustar: &DMatrix<f64>) -> Result<Prediction> {
        if ustar.ncols() != self.u.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.u.ncols(),
                actual: ustar.ncols(),
            });
        }
        let k = cross_kernel(&self.hp, &self.u, ustar)?;
        let l = self.state.factor.chol.l();
        let v = l.solve_lower_triangular(&k).ok_or(Error::NotPositiveDefinite)?;
        let theta0 = self.hp.amplitude();
        let mut variance = DVector::from_iterator(ustar.nrows(), v.column_iter().map(|c| theta0 - c.norm_squared()));
        let mut mean = k.tr_mul(&self.state.alpha);
        if let Some(t) = &self.state.trend {
            let hstar = basis_eval(&self.trend, self.input_model.as_deref(), ustar)?;
            // α − γμ absorbs the trend part of the residual weights
            mean = hstar.tr_mul(&t.mu) + k.tr_mul(&(&self.state.alpha - &t.gamma * &t.mu));
            let r = hstar - t.factor.v.tr_mul(&v);
            for (var, extra) in variance.iter_mut().zip(t.factor.quad_diag(&r)) {
                *var += extra;
            }
        }
        let mut clamped = 0;
        let mut worst: f64 = 0.0;
        for var in variance.iter_mut() {
            if *var < 0.0 {
                clamped += 1;
                worst = worst.min(*var);
                *var = 0.0;
            }
        }
        if clamped > 0 {
            log::debug!("clamped {clamped} negative prediction variances (most negative {worst:e})");
        }
        Ok(Prediction { mean, variance, clamped })
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            format_version: FORMAT_VERSION,
            trend: self.trend.kind,
            hyperparameters: NaturalHyperParams {
                amplitude: self.hp.amplitude(),
                lengthscales: self.hp.lengthscales(),
                noise_std: self.hp.noise_std(),
            },
            // JSON has no -inf, so a noise-free kernel keeps only the natural form
            log_hyperparameters: Some(self.hp.to_log_vec()).filter(|v| v.iter().all(|x| x.is_finite())),
            jitter_policy: self.jitter_policy,
            training_u: self.u.row_iter().map(|r| r.iter().copied().collect()).collect(),
            training_y: self.y.iter().copied().collect(),
            mu: self.mu().iter().copied().collect(),
            input_model: self.input_model.as_deref().cloned(),
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported model format version {}",
                doc.format_version
            )));
        }
        let n = doc.training_y.len();
        let p = doc.hyperparameters.lengthscales.len();
        if doc.training_u.len() != n || doc.training_u.iter().any(|r| r.len() != p) {
            return Err(Error::DimensionMismatch { expected: n, actual: doc.training_u.len() });
        }
        let u = DMatrix::from_fn(n, p, |i, j| doc.training_u[i][j]);
        let y = DVector::from_vec(doc.training_y);
        let nh = &doc.hyperparameters;
        let hp = match &doc.log_hyperparameters {
            Some(v) if v.len() == p + 2 => HyperParams::from_log_vec(v)?,
            Some(v) => return Err(Error::DimensionMismatch { expected: p + 2, actual: v.len() }),
            None => HyperParams::new(nh.amplitude, &nh.lengthscales, nh.noise_std),
        };
        FittedModel::new(u, y, doc.trend, doc.input_model.map(Arc::new), hp, doc.jitter_policy)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }
}

impl TrendFactor {
    /// `S⁻¹ Rᵀ` with the signs fixed so the diagonal is positive.
    pub fn lower(&self) -> DMatrix<f64> {
        let (r, scale) = self.parts();
        let q = r.nrows();
        DMatrix::from_fn(q, q, |i, j| {
            if j > i {
                0.0
            } else {
                r[(j, i)] * r[(j, j)].signum() / scale[i]
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaturalHyperParams {
    pub amplitude: f64,
    pub lengthscales: Vec<f64>,
    pub noise_std: f64,
}

/// Versioned on-disk form of a fitted model; factors are recomputed on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub trend: TrendKind,
    pub hyperparameters: NaturalHyperParams,
    /// `[log θ₀, log θ₁ … log θ_p, log σₙ]` as fitted; preferred on load so
    /// that a reloaded model reproduces predictions bit for bit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_hyperparameters: Option<Vec<f64>>,
    pub jitter_policy: JitterPolicy,
    pub training_u: Vec<Vec<f64>>,
    pub training_y: Vec<f64>,
    pub mu: Vec<f64>,
    pub input_model: Option<JointInputModel>,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: FittedModel,
    pub optimization: Maximization,
}

/// Maximum-likelihood fit with random restarts; keeps the best likelihood.
pub fn fit<R: Rng + ?Sized>(
    u: &DMatrix<f64>,
    y: &DVector<f64>,
    trend: TrendKind,
    input_model: Option<Arc<JointInputModel>>,
    config: &OptimizerConfig,
    rng: &mut R,
) -> Result<FitOutcome> {
    let problem = training_problem(u, y, trend, input_model.as_deref())?;
    let bounds = default_bounds(u.ncols(), y)?;
    let optimization = maximize(&problem, &bounds, config, rng)?;
    let hp = HyperParams::from_log_vec(&optimization.best_params)?;
    let model = FittedModel::new(u.clone(), y.clone(), trend, input_model, hp, problem.jitter)?;
    Ok(FitOutcome { model, optimization })
}

/// Analytic gradient next to central differences of the likelihood.
#[derive(Clone, Debug)]
pub struct GradientCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradientCheck {
    /// Largest componentwise `|a − d| / max(|a|, |d|, floor)`.
    pub fn max_relative_error(&self, floor: f64) -> f64 {
        self.analytic
            .iter()
            .zip(&self.numeric)
            .map(|(a, d)| (a - d).abs() / a.abs().max(d.abs()).max(floor))
            .fold(0.0, f64::max)
    }
}

/// Central differences with one Richardson extrapolation step.
pub fn check_gradient(problem: &LmlProblem, hp: &HyperParams, step: f64) -> Result<GradientCheck> {
    let (_, analytic) = problem.value_and_gradient(hp)?;
    let x0 = hp.to_log_vec();
    let mut numeric = Vec::with_capacity(x0.len());
    let central = |i: usize, h: f64| -> Result<f64> {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[i] += h;
        xm[i] -= h;
        let fp = problem.value(&HyperParams::from_log_vec(&xp)?)?;
        let fm = problem.value(&HyperParams::from_log_vec(&xm)?)?;
        Ok((fp - fm) / (2.0 * h))
    };
    for i in 0..x0.len() {
        let coarse = central(i, step)?;
        let fine = central(i, 0.5 * step)?;
        numeric.push((4.0 * fine - coarse) / 3.0);
    }
    Ok(GradientCheck { analytic, numeric })
}
