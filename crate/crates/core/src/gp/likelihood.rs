//! Restricted log marginal likelihood of a GP with a linear-in-parameters
//! trend, and its gradient in log hyperparameters.
//!
//! With `K_y = L Lᵀ`, `α = K_y⁻¹ y`, `γ = K_y⁻¹ Hᵀ`, `A = H K_y⁻¹ Hᵀ`,
//! `η = A⁻¹ H` and `ε = γ η`:
//!
//! ```text
//! log p(y) = −½ yᵀα + ½ yᵀεα − ½ log|K_y| − ½ log|A| − (n−q)/2 · log 2π
//! ∂/∂θ     = ½ tr((ρ − ξ − ξᵀ + ξεᵀ + (ε − I) K_y⁻¹) ∂K_y/∂θ)
//! ```
//!
//! where `ρ = ααᵀ` and `ξ = ερ`. With `q = 0` every trend term vanishes and
//! the simple-kriging likelihood remains.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{factorize, CovarianceFactor, HyperParams, JitterPolicy};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Deliberate defects used to check that gradient validation catches them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientFault {
    FlipAmplitudeSign,
}

/// Cholesky-type factor of `A = H K_y⁻¹ Hᵀ`.
///
/// Obtained from a QR decomposition of the column-equilibrated
/// `V = L⁻¹ Hᵀ`, so `A = (S⁻¹ Rᵀ)(R S⁻¹)` without ever forming `VᵀV`.
#[derive(Clone, Debug)]
pub struct TrendFactor {
    /// `L⁻¹ Hᵀ`, `n × q`.
    pub v: DMatrix<f64>,
    /// Upper-triangular `R` of the scaled QR, `q × q`.
    r: DMatrix<f64>,
    /// Column scales `S`.
    scale: DVector<f64>,
}

impl TrendFactor {
    fn new(l: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<Self> {
        let (q, n) = h.shape();
        let v = l
            .solve_lower_triangular(&h.transpose())
            .ok_or(Error::NotPositiveDefinite)?;
        let scale = DVector::from_iterator(
            q,
            v.column_iter().map(|c| {
                let norm = c.norm();
                if norm > 0.0 && norm.is_finite() {
                    1.0 / norm
                } else {
                    0.0
                }
            }),
        );
        if scale.iter().any(|&s| s == 0.0) {
            return Err(Error::RankDeficientTrend { q, n });
        }
        let mut scaled = v.clone();
        for (j, mut c) in scaled.column_iter_mut().enumerate() {
            c *= scale[j];
        }
        let r = scaled.qr().r();
        let diag: Vec<f64> = (0..q).map(|i| r[(i, i)].abs()).collect();
        let largest = diag.iter().copied().fold(0.0, f64::max);
        let tol = largest * (n.max(q) as f64) * f64::EPSILON;
        if diag.iter().any(|&d| !(d > tol)) {
            return Err(Error::RankDeficientTrend { q, n });
        }
        Ok(TrendFactor { v, r, scale })
    }

    pub fn q(&self) -> usize {
        self.r.nrows()
    }

    pub(super) fn parts(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.r, &self.scale)
    }

    pub fn ln_det(&self) -> f64 {
        let q = self.q();
        (0..q).map(|i| 2.0 * self.r[(i, i)].abs().ln() - 2.0 * self.scale[i].ln()).sum()
    }

    /// `A⁻¹ b` for a `q × m` right-hand side.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = b.clone();
        for (i, mut row) in z.row_iter_mut().enumerate() {
            row *= self.scale[i];
        }
        let w = self.r.tr_solve_upper_triangular(&z).expect("nonsingular R");
        let mut z = self.r.solve_upper_triangular(&w).expect("nonsingular R");
        for (i, mut row) in z.row_iter_mut().enumerate() {
            row *= self.scale[i];
        }
        z
    }

    /// Squared column norms of `L_A⁻¹ b`, i.e. `diag(bᵀ A⁻¹ b)`.
    pub fn quad_diag(&self, b: &DMatrix<f64>) -> Vec<f64> {
        let mut z = b.clone();
        for (i, mut row) in z.row_iter_mut().enumerate() {
            row *= self.scale[i];
        }
        let w = self.r.tr_solve_upper_triangular(&z).expect("nonsingular R");
        w.column_iter().map(|c| c.norm_squared()).collect()
    }
}

/// Everything the likelihood and the predictor reuse at fixed hyperparameters.
#[derive(Clone, Debug)]
pub struct LikelihoodState {
    pub factor: CovarianceFactor,
    /// `K_y⁻¹ y`.
    pub alpha: DVector<f64>,
    pub trend: Option<TrendState>,
    pub lml: f64,
}

#[derive(Clone, Debug)]
pub struct TrendState {
    pub factor: TrendFactor,
    /// `K_y⁻¹ Hᵀ`, `n × q`.
    pub gamma: DMatrix<f64>,
    /// Generalized least-squares trend coefficients `A⁻¹ H α`.
    pub mu: DVector<f64>,
}

/// Intermediate matrices of the gradient bracket.
#[derive(Clone, Debug)]
pub struct GradientWorkspace {
    pub rho: DMatrix<f64>,
    pub eps: DMatrix<f64>,
    pub xi: DMatrix<f64>,
    pub kinv: DMatrix<f64>,
    pub eta: DMatrix<f64>,
    /// `ρ − ξ − ξᵀ + ξεᵀ + (ε − I) K_y⁻¹`.
    pub bracket: DMatrix<f64>,
}

/// Training data for likelihood evaluations: `u` (`n × p`), `y` (`n`) and
/// the trend basis `H` (`q × n`, possibly `0 × n`).
#[derive(Clone, Debug)]
pub struct LmlProblem {
    pub u: DMatrix<f64>,
    pub y: DVector<f64>,
    pub h: DMatrix<f64>,
    pub jitter: JitterPolicy,
    pub fault: Option<GradientFault>,
}

impl LmlProblem {
    pub fn new(u: DMatrix<f64>, y: DVector<f64>, h: DMatrix<f64>) -> Result<Self> {
        let n = u.nrows();
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: y.len() });
        }
        if h.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: h.ncols() });
        }
        if h.nrows() >= n {
            return Err(Error::RankDeficientTrend { q: h.nrows(), n });
        }
        if y.iter().any(|v| !v.is_finite()) || h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("training data must be finite".into()));
        }
        Ok(LmlProblem {
            u,
            y,
            h,
            jitter: JitterPolicy::default(),
            fault: None,
        })
    }

    pub fn simple(u: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let n = u.nrows();
        Self::new(u, y, DMatrix::zeros(0, n))
    }

    pub fn with_jitter(mut self, jitter: JitterPolicy) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn with_fault(mut self, fault: Option<GradientFault>) -> Self {
        self.fault = fault;
        self
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn p(&self) -> usize {
        self.u.ncols()
    }

    pub fn q(&self) -> usize {
        self.h.nrows()
    }

    /// Factors `K_y` (one Cholesky) and the trend system.
    pub fn state(&self, hp: &HyperParams) -> Result<LikelihoodState> {
        let factor = factorize(hp, &self.u, self.jitter)?;
        let l = factor.chol.l();
        let alpha = factor.chol.solve(&self.y);
        let n = self.n() as f64;
        let q = self.q();
        let half_ln_det_k: f64 = l.diagonal().iter().map(|d| d.ln()).sum();
        let mut lml = -0.5 * self.y.dot(&alpha) - half_ln_det_k;
        let trend = if q > 0 {
            let tf = TrendFactor::new(&l, &self.h)?;
            let gamma = l
                .tr_solve_lower_triangular(&tf.v)
                .ok_or(Error::NotPositiveDefinite)?;
            let h_alpha = &self.h * &alpha;
            let mu_mat = tf.solve(&DMatrix::from_column_slice(q, 1, h_alpha.as_slice()));
            let mu = mu_mat.column(0).into_owned();
            lml += 0.5 * h_alpha.dot(&mu) - 0.5 * tf.ln_det();
            Some(TrendState { factor: tf, gamma, mu })
        } else {
            None
        };
        lml -= 0.5 * (n - q as f64) * LN_2PI;
        if !lml.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(LikelihoodState { factor, alpha, trend, lml })
    }

    pub fn value(&self, hp: &HyperParams) -> Result<f64> {
        Ok(self.state(hp)?.lml)
    }

    /// Bracket matrix at a factored state.
    pub fn workspace(&self, state: &LikelihoodState) -> GradientWorkspace {
        let n = self.n();
        let kinv = state.factor.chol.inverse();
        let a = &state.alpha;
        let rho = a * a.transpose();
        let (eps, xi, eta, bracket) = match &state.trend {
            Some(t) => {
                let eta = t.factor.solve(&self.h);
                let eps = &t.gamma * &eta;
                // ξ = ερ = (εα)αᵀ and ξεᵀ = (εα)(εα)ᵀ, both rank one
                let b = &eps * a;
                let xi = &b * a.transpose();
                let eps_kinv = &t.gamma * (&eta * &kinv);
                let d = a - &b;
                let bracket = &d * d.transpose() + eps_kinv - &kinv;
                (eps, xi, eta, bracket)
            }
            None => {
                let bracket = &rho - &kinv;
                (DMatrix::zeros(n, n), DMatrix::zeros(n, n), DMatrix::zeros(0, n), bracket)
            }
        };
        GradientWorkspace { rho, eps, xi, kinv, eta, bracket }
    }

    /// Log-likelihood and its gradient in `[log θ₀, log θ₁ … log θ_p, log σₙ]`.
    pub fn value_and_gradient(&self, hp: &HyperParams) -> Result<(f64, Vec<f64>)> {
        let state = self.state(hp)?;
        let ws = self.workspace(&state);
        let mut grad = contract(hp, &self.u, &state.factor, &ws.bracket);
        if self.fault == Some(GradientFault::FlipAmplitudeSign) {
            grad[0] = -grad[0];
        }
        Ok((state.lml, grad))
    }
}

/// `½ tr(B ∂K_y/∂θ_l)` for every log-parameter, without forming `∂K_y/∂θ_l`.
fn contract(hp: &HyperParams, u: &DMatrix<f64>, factor: &CovarianceFactor, b: &DMatrix<f64>) -> Vec<f64> {
    let n = u.nrows();
    let p = u.ncols();
    let k = &factor.k;
    let trace_b: f64 = b.diagonal().sum();
    let mut grad = vec![0.0; p + 2];
    let mut weighted = 0.0;
    let mut per_dim = vec![0.0; p];
    for j in 0..n {
        for i in 0..n {
            let w = b[(i, j)] * k[(i, j)];
            weighted += w;
            if i > j {
                for (d, acc) in per_dim.iter_mut().enumerate() {
                    let diff = u[(i, d)] - u[(j, d)];
                    *acc += w * diff * diff;
                }
            }
        }
    }
    grad[0] = 0.5 * (weighted + factor.jitter * hp.amplitude() * trace_b);
    for (d, acc) in per_dim.into_iter().enumerate() {
        // both triangles, times ½ · 2/θ_d²
        grad[d + 1] = 2.0 * acc / hp.lengthscale(d).powi(2);
    }
    grad[p + 1] = hp.noise_std().powi(2) * trace_b;
    grad
}

pub fn lml_simple(hp: &HyperParams, u: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    LmlProblem::simple(u.clone(), y.clone())?.value(hp)
}

pub fn lml_grad_simple(hp: &HyperParams, u: &DMatrix<f64>, y: &DVector<f64>) -> Result<Vec<f64>> {
    Ok(LmlProblem::simple(u.clone(), y.clone())?.value_and_gradient(hp)?.1)
}

pub fn lml_universal(hp: &HyperParams, u: &DMatrix<f64>, y: &DVector<f64>, h: &DMatrix<f64>) -> Result<f64> {
    LmlProblem::new(u.clone(), y.clone(), h.clone())?.value(hp)
}

pub fn lml_grad_universal(
    hp: &HyperParams,
    u: &DMatrix<f64>,
    y: &DVector<f64>,
    h: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    Ok(LmlProblem::new(u.clone(), y.clone(), h.clone())?.value_and_gradient(hp)?.1)
}
