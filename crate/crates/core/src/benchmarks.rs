//! Benchmark functions with their physical-space input models.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::distributions::Marginal;
use crate::error::{Error, Result};
use crate::input_model::{Correlation, JointInputModel};

/// Coefficients `a₁, a₂, a₃, M` of the 15-dimensional Oakley–O'Hagan function.
#[derive(Clone, Debug, Deserialize)]
pub struct OakleyCoefficients {
    #[serde(default)]
    pub source: String,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub a3: Vec<f64>,
    pub m: Vec<Vec<f64>>,
}

impl OakleyCoefficients {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: OakleyCoefficients = serde_json::from_str(text)?;
        let p = c.a1.len();
        if c.a2.len() != p || c.a3.len() != p || c.m.len() != p || c.m.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidParameter("inconsistent coefficient dimensions".into()));
        }
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The coefficient set shipped with the crate.
    pub fn bundled() -> &'static OakleyCoefficients {
        static BUNDLED: OnceLock<OakleyCoefficients> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            OakleyCoefficients::from_json(include_str!("../data/oakley_ohagan_15d.json")).expect("bundled coefficients")
        })
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut f = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            f += self.a1[i] * xi + self.a2[i] * xi.sin() + self.a3[i] * xi.cos();
            let row: f64 = self.m[i].iter().zip(x).map(|(m, xj)| m * xj).sum();
            f += xi * row;
        }
        f
    }
}

#[derive(Clone)]
enum Evaluator {
    Builtin(fn(&[f64]) -> Result<f64>),
    Oakley(Arc<OakleyCoefficients>),
}

#[derive(Clone)]
pub struct Benchmark {
    pub id: u8,
    pub name: &'static str,
    pub input_model: Arc<JointInputModel>,
    evaluator: Evaluator,
}

impl std::fmt::Debug for Benchmark {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Benchmark").field("id", &self.id).field("name", &self.name).finish()
    }
}

impl Benchmark {
    pub fn dim(&self) -> usize {
        self.input_model.dim()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let y = match &self.evaluator {
            Evaluator::Builtin(f) => f(x)?,
            Evaluator::Oakley(c) => c.evaluate(x),
        };
        if !y.is_finite() {
            return Err(domain(self.id, "non-finite value"));
        }
        Ok(y)
    }

    /// Evaluates every row of `x` (`m × p`).
    pub fn evaluate_rows(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let mut row = vec![0.0; x.ncols()];
        let mut out = DVector::zeros(x.nrows());
        for r in 0..x.nrows() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = x[(r, c)];
            }
            out[r] = self.evaluate(&row)?;
        }
        Ok(out)
    }

    /// Swaps in another coefficient set (only meaningful for #9).
    pub fn with_oakley_coefficients(mut self, coefficients: OakleyCoefficients) -> Result<Self> {
        if self.id != 9 {
            return Err(Error::InvalidParameter(format!("benchmark #{} takes no coefficients", self.id)));
        }
        if coefficients.a1.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: coefficients.a1.len(),
            });
        }
        self.evaluator = Evaluator::Oakley(Arc::new(coefficients));
        Ok(self)
    }
}

fn domain(id: u8, reason: &str) -> Error {
    Error::Domain {
        id,
        reason: reason.to_string(),
    }
}

fn f1(x: &[f64]) -> Result<f64> {
    Ok(5.0 + x[0] + x[0].cos())
}

fn f2(x: &[f64]) -> Result<f64> {
    if x[1] == 0.0 {
        return Err(domain(2, "x2 = 0"));
    }
    Ok(x[0] / x[1])
}

fn f3(x: &[f64]) -> Result<f64> {
    Ok(x[0] * x[0] + x[1].powi(3))
}

fn f4(x: &[f64]) -> Result<f64> {
    if x[0] == 0.0 {
        return Err(domain(4, "x1 = 0"));
    }
    Ok(1.0 - 4.0 / 1125.0 * x[1] / x[0] - (x[2] / x[0]).powi(2) / 5625.0)
}

fn f5(x: &[f64]) -> Result<f64> {
    if x[0] == 0.0 {
        return Err(domain(5, "x1 = 0"));
    }
    Ok(5e5 / x[0] * ((x[1] / 16.0).powi(2) + (x[2] / 4.0).powi(2)).sqrt())
}

fn f6(x: &[f64]) -> Result<f64> {
    let ratio = x[1] / x[0];
    if !(ratio > 0.0) || ratio == 1.0 || x[4] == 0.0 {
        return Err(domain(6, "requires x2/x1 > 0, x2/x1 != 1 and x5 != 0"));
    }
    let log_ratio = ratio.ln();
    let denom = log_ratio * (1.0 + 2.0 * x[6] * x[2] / (log_ratio * x[0] * x[0] * x[7]) + x[2] / x[4]);
    if denom == 0.0 {
        return Err(domain(6, "vanishing denominator"));
    }
    Ok(2.0 * PI * x[2] * (x[3] - x[5]) / denom)
}

fn f7(x: &[f64]) -> Result<f64> {
    let p = x[1] + x[2] + x[3];
    let eb = 8.0 * PI * PI / 9e8 * x[4] * x[5] * x[6] * x[6] * x[8];
    let area = x[4] * x[5];
    if area == 0.0 || x[6] == 0.0 || eb == p {
        return Err(domain(7, "requires x5 x6 x7 != 0 and Eb != P"));
    }
    Ok(x[0] - p / (2.0 * area) - x[7] * p * eb / (area * x[6] * (eb - p)))
}

fn f8(x: &[f64]) -> Result<f64> {
    Ok(-5.488e-9 * x[0] * x[0] * x[1] * x[2] * x[2] * x[3] * x[4] * x[5] * x[6] * x[7] * x[8])
}

fn build(id: u8) -> Result<Benchmark> {
    use Marginal as M;
    let (name, marginals, corr, evaluator): (&'static str, Vec<Marginal>, Vec<Correlation>, Evaluator) = match id {
        1 => ("oakley-ohagan-1d", vec![M::normal(0.0, 4.0)?], vec![], Evaluator::Builtin(f1)),
        2 => (
            "lognormal-ratio",
            vec![M::lognormal(1.0, 0.5)?, M::lognormal(1.0, 0.5)?],
            vec![Correlation { i: 0, j: 1, rho: 0.3 }],
            Evaluator::Builtin(f2),
        ),
        3 => ("webster", vec![M::uniform(1.0, 10.0)?, M::normal(2.0, 1.0)?], vec![], Evaluator::Builtin(f3)),
        4 => (
            "short-column",
            vec![M::lognormal(5.0, 0.5)?, M::normal(2000.0, 400.0)?, M::normal(500.0, 100.0)?],
            vec![Correlation { i: 1, j: 2, rho: 0.5 }],
            Evaluator::Builtin(f4),
        ),
        5 => (
            "cantilever-beam",
            vec![M::normal(2.9e7, 1.45e6)?, M::normal(1000.0, 100.0)?, M::normal(500.0, 100.0)?],
            vec![],
            Evaluator::Builtin(f5),
        ),
        6 => (
            "borehole",
            vec![
                M::normal(0.1, 0.0162)?,
                M::lognormal(3700.0, 4890.0)?,
                M::uniform(63070.0, 115600.0)?,
                M::uniform(990.0, 1110.0)?,
                M::uniform(63.1, 116.0)?,
                M::uniform(700.0, 820.0)?,
                M::uniform(1120.0, 1680.0)?,
                M::uniform(9855.0, 12045.0)?,
            ],
            vec![],
            Evaluator::Builtin(f6),
        ),
        7 => (
            "steel-column",
            vec![
                M::lognormal(400.0, 35.0)?,
                M::normal(5e5, 5e4)?,
                M::gumbel(6e5, 9e4)?,
                M::gumbel(6e5, 9e4)?,
                M::lognormal(300.0, 3.0)?,
                M::lognormal(20.0, 2.0)?,
                M::lognormal(300.0, 5.0)?,
                M::normal(30.0, 10.0)?,
                M::weibull(2.1e5, 4200.0)?,
            ],
            vec![],
            Evaluator::Builtin(f7),
        ),
        8 => (
            "sulfur",
            vec![
                M::lognormal(0.76, 0.152)?,
                M::lognormal(0.39, 0.039)?,
                M::lognormal(0.85, 0.085)?,
                M::lognormal(0.3, 0.09)?,
                M::lognormal(5.0, 2.0)?,
                M::lognormal(1.7, 0.34)?,
                M::lognormal(71.0, 10.65)?,
                M::lognormal(0.5, 0.25)?,
                M::lognormal(5.5, 2.75)?,
            ],
            vec![],
            Evaluator::Builtin(f8),
        ),
        9 => (
            "oakley-ohagan-15d",
            vec![M::normal(0.0, 1.0)?; 15],
            vec![],
            Evaluator::Oakley(Arc::new(OakleyCoefficients::bundled().clone())),
        ),
        _ => return Err(Error::UnknownToken(format!("benchmark #{id}"))),
    };
    Ok(Benchmark {
        id,
        name,
        input_model: Arc::new(JointInputModel::with_correlations(marginals, &corr)?),
        evaluator,
    })
}

/// All nine benchmarks, in id order.
pub fn registry() -> &'static [Benchmark] {
    static REGISTRY: OnceLock<Vec<Benchmark>> = OnceLock::new();
    REGISTRY.get_or_init(|| (1..=9).map(|id| build(id).expect("benchmark definition")).collect())
}

pub fn get(id: u8) -> Result<&'static Benchmark> {
    registry()
        .iter()
        .find(|b| b.id == id)
        .ok_or_else(|| Error::UnknownToken(format!("benchmark #{id}")))
}

/// Looks up a benchmark by id (`"6"`, `"#6"`) or name (`"borehole"`).
pub fn lookup(token: &str) -> Result<&'static Benchmark> {
    let t = token.trim().trim_start_matches('#');
    if let Ok(id) = t.parse::<u8>() {
        return get(id);
    }
    registry()
        .iter()
        .find(|b| b.name == t)
        .ok_or_else(|| Error::UnknownToken(token.to_string()))
}

pub fn evaluate(id: u8, x: &[f64]) -> Result<f64> {
    get(id)?.evaluate(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistKind;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn registry_shape() {
        let dims: Vec<usize> = registry().iter().map(Benchmark::dim).collect();
        assert_eq!(dims, vec![1, 2, 2, 3, 3, 8, 9, 9, 15]);
        let ids: Vec<u8> = registry().iter().map(|b| b.id).collect();
        assert_eq!(ids, (1..=9).collect::<Vec<_>>());
        assert!(get(0).is_err() && get(10).is_err());
        assert_eq!(lookup("borehole").unwrap().id, 6);
        assert_eq!(lookup("#4").unwrap().id, 4);
        assert!(lookup("nope").is_err());
    }

    #[test]
    fn simple_values() {
        assert_eq!(evaluate(1, &[0.0]).unwrap(), 6.0);
        let e = std::f64::consts::E;
        assert_eq!(evaluate(2, &[e, e]).unwrap(), 1.0);
        assert_eq!(evaluate(3, &[1.0, 2.0]).unwrap(), 9.0);
        assert_eq!(evaluate(4, &[5.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_relative_eq!(evaluate(8, &[1.0; 9]).unwrap(), -5.488e-9, max_relative = 1e-15);
        assert_relative_eq!(evaluate(5, &[5e5, 16.0, 0.0]).unwrap(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn borehole_reference_value() {
        let x = [0.1, 3700.0, 89335.0, 1050.0, 89.55, 760.0, 1400.0, 10950.0];
        let log_ratio = (3700.0f64 / 0.1).ln();
        let leakage = 2.0 * 1400.0 * 89335.0 / (log_ratio * 0.01 * 10950.0);
        let transmissivity = 89335.0 / 89.55;
        let denom = log_ratio * (1.0 + leakage + transmissivity);
        let expect = 2.0 * PI * 89335.0 * (1050.0 - 760.0) / denom;
        let got = evaluate(6, &x).unwrap();
        assert_relative_eq!(got, expect, max_relative = 1e-14);
        assert_relative_eq!(got, 70.931895, epsilon = 1e-6);
    }

    #[test]
    fn steel_column_marginal_order() {
        use DistKind::*;
        let kinds: Vec<DistKind> = get(7).unwrap().input_model.marginals().iter().map(|m| m.kind()).collect();
        assert_eq!(kinds, vec![Lognormal, Normal, Gumbel, Gumbel, Lognormal, Lognormal, Lognormal, Normal, Weibull]);
    }

    #[test]
    fn correlations_as_tabulated() {
        assert_eq!(get(2).unwrap().input_model.pearson_corr()[(0, 1)], 0.3);
        assert_eq!(get(4).unwrap().input_model.pearson_corr()[(1, 2)], 0.5);
        for id in [1, 3, 5, 6, 7, 8, 9] {
            assert!(get(id).unwrap().input_model.is_independent());
        }
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(evaluate(2, &[1.0, 0.0]), Err(Error::Domain { id: 2, .. })));
        let mut x = [0.1, 3700.0, 89335.0, 1050.0, 89.55, 760.0, 1400.0, 10950.0];
        x[0] = -0.1;
        assert!(matches!(evaluate(6, &x), Err(Error::Domain { id: 6, .. })));
        x[0] = 3700.0;
        assert!(evaluate(6, &x).is_err());
        assert!(evaluate(4, &[0.0, 1.0, 1.0]).is_err());
        assert!(matches!(evaluate(3, &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn sampled_inputs_stay_in_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for b in registry() {
            let x = b.input_model.sample(&mut rng, 100_000).unwrap();
            let y = b.evaluate_rows(&x).unwrap();
            assert!(y.iter().all(|v| v.is_finite()), "#{}", b.id);
        }
    }

    #[test]
    fn oakley_second_evaluation_order() {
        let c = OakleyCoefficients::bundled();
        assert_eq!(c.a1.len(), 15);
        assert_eq!(c.m[0][..3], [-0.0225, -0.185, 0.134]);
        let a1 = DVector::from_vec(c.a1.clone());
        let a2 = DVector::from_vec(c.a2.clone());
        let a3 = DVector::from_vec(c.a3.clone());
        let m = DMatrix::from_fn(15, 15, |i, j| c.m[i][j]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = get(9).unwrap().input_model.sample(&mut rng, 50).unwrap();
        for r in 0..50 {
            let xv = x.row(r).transpose();
            let expect = a1.dot(&xv) + a2.dot(&xv.map(f64::sin)) + a3.dot(&xv.map(f64::cos)) + xv.dot(&(&m * &xv));
            assert_relative_eq!(evaluate(9, xv.as_slice()).unwrap(), expect, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn oakley_coefficients_swap_and_validate() {
        let mut c = OakleyCoefficients::bundled().clone();
        c.a1 = vec![1.0; 15];
        c.a2 = vec![0.0; 15];
        c.a3 = vec![0.0; 15];
        c.m = vec![vec![0.0; 15]; 15];
        let b = get(9).unwrap().clone().with_oakley_coefficients(c).unwrap();
        assert_eq!(b.evaluate(&[1.0; 15]).unwrap(), 15.0);
        assert!(get(1).unwrap().clone().with_oakley_coefficients(OakleyCoefficients::bundled().clone()).is_err());
        assert!(OakleyCoefficients::from_json(r#"{"a1":[1],"a2":[1],"a3":[],"m":[[1]]}"#).is_err());
    }
}
