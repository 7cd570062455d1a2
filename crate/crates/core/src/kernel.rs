//! Anisotropic squared-exponential kernel on the unit hypercube.
//!
//! `k(u, v) = θ₀ exp(−Σᵢ ((uᵢ − vᵢ)/θᵢ)²)`, plus i.i.d. noise `σₙ²` and a
//! small jitter on the diagonal of the training covariance.

use std::cell::Cell;

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters, stored in log space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub log_amplitude: f64,
    pub log_lengthscales: Vec<f64>,
    /// `-inf` encodes a noise-free kernel.
    pub log_noise: f64,
}

impl HyperParams {
    pub fn new(amplitude: f64, lengthscales: &[f64], noise_std: f64) -> Self {
        HyperParams {
            log_amplitude: amplitude.ln(),
            log_lengthscales: lengthscales.iter().map(|l| l.ln()).collect(),
            log_noise: noise_std.ln(),
        }
    }

    /// Unpacks `[log θ₀, log θ₁ … log θ_p, log σₙ]`.
    pub fn from_log_vec(v: &[f64]) -> Result<Self> {
        if v.len() < 3 {
            return Err(Error::InvalidParameter(format!("need at least 3 log-parameters, got {}", v.len())));
        }
        Ok(HyperParams {
            log_amplitude: v[0],
            log_lengthscales: v[1..v.len() - 1].to_vec(),
            log_noise: v[v.len() - 1],
        })
    }

    pub fn to_log_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.push(self.log_amplitude);
        v.extend_from_slice(&self.log_lengthscales);
        v.push(self.log_noise);
        v
    }

    pub fn dim(&self) -> usize {
        self.log_lengthscales.len()
    }

    pub fn n_params(&self) -> usize {
        self.dim() + 2
    }

    pub fn amplitude(&self) -> f64 {
        self.log_amplitude.exp()
    }

    pub fn lengthscale(&self, i: usize) -> f64 {
        self.log_lengthscales[i].exp()
    }

    pub fn lengthscales(&self) -> Vec<f64> {
        self.log_lengthscales.iter().map(|l| l.exp()).collect()
    }

    pub fn noise_std(&self) -> f64 {
        self.log_noise.exp()
    }
}

/// Diagonal jitter, relative to `θ₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterPolicy {
    pub initial: f64,
    pub max: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        JitterPolicy {
            initial: 1e-10,
            max: 1e-4,
        }
    }
}

impl JitterPolicy {
    pub fn none() -> Self {
        JitterPolicy { initial: 0.0, max: 0.0 }
    }

    fn next(&self, current: f64) -> Option<f64> {
        let next = if current == 0.0 { 1e-10 } else { current * 10.0 };
        (next <= self.max * (1.0 + 1e-12)).then_some(next)
    }
}

thread_local! {
    static FACTORIZATIONS: Cell<u64> = const { Cell::new(0) };
}

/// Number of `n × n` covariance Cholesky attempts made on this thread.
pub fn factorization_count() -> u64 {
    FACTORIZATIONS.with(Cell::get)
}

fn check_dims(hp: &HyperParams, p: usize) -> Result<()> {
    if hp.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: hp.dim(),
            actual: p,
        });
    }
    Ok(())
}

#[inline]
fn scaled_sq_dist(inv_ls2: &[f64], u: impl Iterator<Item = f64>, v: impl Iterator<Item = f64>) -> f64 {
    u.zip(v).zip(inv_ls2).map(|((a, b), w)| (a - b) * (a - b) * w).sum()
}

pub fn kernel_eval(hp: &HyperParams, u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(hp, u.len())?;
    check_dims(hp, v.len())?;
    let inv: Vec<f64> = hp.lengthscales().iter().map(|l| 1.0 / (l * l)).collect();
    Ok(hp.amplitude() * (-scaled_sq_dist(&inv, u.iter().copied(), v.iter().copied())).exp())
}

/// Noise-free covariance `K` of the rows of `u`.
pub fn covariance(hp: &HyperParams, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dims(hp, u.ncols())?;
    let n = u.nrows();
    let theta0 = hp.amplitude();
    let inv: Vec<f64> = hp.lengthscales().iter().map(|l| 1.0 / (l * l)).collect();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = theta0;
        for i in j + 1..n {
            let d = scaled_sq_dist(&inv, u.row(i).iter().copied(), u.row(j).iter().copied());
            let v = theta0 * (-d).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// `K_y = K + (σₙ² + jitter·θ₀) I`.
pub fn kernel_matrix(hp: &HyperParams, u: &DMatrix<f64>, jitter: f64) -> Result<DMatrix<f64>> {
    let mut k = covariance(hp, u)?;
    let diag = hp.noise_std().powi(2) + jitter * hp.amplitude();
    for i in 0..k.nrows() {
        k[(i, i)] += diag;
    }
    Ok(k)
}

/// Cross covariance between training rows `u` (n) and prediction rows `ustar` (l): `n × l`.
pub fn cross_kernel(hp: &HyperParams, u: &DMatrix<f64>, ustar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dims(hp, u.ncols())?;
    check_dims(hp, ustar.ncols())?;
    let theta0 = hp.amplitude();
    let inv: Vec<f64> = hp.lengthscales().iter().map(|l| 1.0 / (l * l)).collect();
    let mut k = DMatrix::zeros(u.nrows(), ustar.nrows());
    for j in 0..ustar.nrows() {
        for i in 0..u.nrows() {
            let d = scaled_sq_dist(&inv, u.row(i).iter().copied(), ustar.row(j).iter().copied());
            k[(i, j)] = theta0 * (-d).exp();
        }
    }
    Ok(k)
}

/// Derivatives of `K_y` with respect to every log-parameter, in the order
/// `[log θ₀, log θ₁ … log θ_p, log σₙ]`.
///
/// The jitter scales with `θ₀`, so it belongs to the amplitude derivative.
pub fn kernel_matrix_grad(hp: &HyperParams, u: &DMatrix<f64>, jitter: f64) -> Result<Vec<DMatrix<f64>>> {
    let k = covariance(hp, u)?;
    let n = u.nrows();
    let mut grads = Vec::with_capacity(hp.n_params());
    let mut d0 = k.clone();
    for i in 0..n {
        d0[(i, i)] += jitter * hp.amplitude();
    }
    grads.push(d0);
    for (dim, l) in hp.lengthscales().iter().enumerate() {
        let inv = 2.0 / (l * l);
        let g = DMatrix::from_fn(n, n, |i, j| {
            let d = u[(i, dim)] - u[(j, dim)];
            k[(i, j)] * d * d * inv
        });
        grads.push(g);
    }
    grads.push(DMatrix::identity(n, n) * (2.0 * hp.noise_std().powi(2)));
    Ok(grads)
}

/// Cholesky factor of `K_y` together with the noise-free `K` and the jitter used.
#[derive(Clone, Debug)]
pub struct CovarianceFactor {
    pub k: DMatrix<f64>,
    pub chol: Cholesky<f64, Dyn>,
    /// Jitter relative to `θ₀`.
    pub jitter: f64,
}

/// Assembles and factors `K_y`, escalating the jitter ×10 on failure.
pub fn factorize(hp: &HyperParams, u: &DMatrix<f64>, policy: JitterPolicy) -> Result<CovarianceFactor> {
    let k = covariance(hp, u)?;
    let base = hp.noise_std().powi(2);
    let theta0 = hp.amplitude();
    let mut jitter = policy.initial;
    loop {
        let mut ky = k.clone();
        let diag = base + jitter * theta0;
        for i in 0..ky.nrows() {
            ky[(i, i)] += diag;
        }
        FACTORIZATIONS.with(|c| c.set(c.get() + 1));
        if ky.iter().all(|v| v.is_finite()) {
            if let Some(chol) = Cholesky::new(ky) {
                if jitter > policy.initial {
                    log::debug!("covariance factored with escalated jitter {jitter:e}");
                }
                return Ok(CovarianceFactor { k, chol, jitter });
            }
        }
        match policy.next(jitter) {
            Some(j) => jitter = j,
            None => return Err(Error::Cholesky { jitter }),
        }
    }
}
