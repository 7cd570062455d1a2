//! Polynomial trend bases for universal kriging.
//!
//! Untransformed kinds evaluate monomials directly on the uniform
//! coordinates `u`. Transformed kinds map each point back to the physical
//! space with the inverse Rosenblatt transformation first, so the same
//! monomials become functions of `x = T⁻¹(u)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::input_model::JointInputModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrendKind {
    #[serde(rename = "zero")]
    Zero,
    #[serde(rename = "constant")]
    Constant,
    #[serde(rename = "linear")]
    Linear,
    #[serde(rename = "quadratic")]
    Quadratic,
    #[serde(rename = "t-linear")]
    TransformedLinear,
    #[serde(rename = "t-quadratic")]
    TransformedQuadratic,
}

impl TrendKind {
    pub const ALL: [TrendKind; 6] = [
        TrendKind::Zero,
        TrendKind::Constant,
        TrendKind::Linear,
        TrendKind::Quadratic,
        TrendKind::TransformedLinear,
        TrendKind::TransformedQuadratic,
    ];

    pub fn token(self) -> &'static str {
        match self {
            TrendKind::Zero => "zero",
            TrendKind::Constant => "constant",
            TrendKind::Linear => "linear",
            TrendKind::Quadratic => "quadratic",
            TrendKind::TransformedLinear => "t-linear",
            TrendKind::TransformedQuadratic => "t-quadratic",
        }
    }

    /// Column heading used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            TrendKind::Zero => "simple kriging",
            TrendKind::Constant => "ordinary kriging",
            TrendKind::Linear => "linear trend",
            TrendKind::Quadratic => "quadratic trend",
            TrendKind::TransformedLinear => "transf. linear trend",
            TrendKind::TransformedQuadratic => "transf. quadratic trend",
        }
    }

    pub fn is_transformed(self) -> bool {
        matches!(self, TrendKind::TransformedLinear | TrendKind::TransformedQuadratic)
    }

    fn degree(self) -> Option<u8> {
        match self {
            TrendKind::Zero => None,
            TrendKind::Constant => Some(0),
            TrendKind::Linear | TrendKind::TransformedLinear => Some(1),
            TrendKind::Quadratic | TrendKind::TransformedQuadratic => Some(2),
        }
    }

    /// Number of basis functions in dimension `p`.
    pub fn basis_count(self, p: usize) -> usize {
        match self.degree() {
            None => 0,
            Some(0) => 1,
            Some(1) => 1 + p,
            _ => 1 + 2 * p + p * (p - 1) / 2,
        }
    }
}

impl fmt::Display for TrendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for TrendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrendKind::ALL
            .into_iter()
            .find(|k| k.token() == s)
            .ok_or_else(|| Error::UnknownToken(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendSpec {
    pub kind: TrendKind,
    pub dim: usize,
}

impl TrendSpec {
    pub fn new(kind: TrendKind, dim: usize) -> Self {
        TrendSpec { kind, dim }
    }

    pub fn q(&self) -> usize {
        self.kind.basis_count(self.dim)
    }
}

/// Monomials up to `degree`: `1`, `xᵢ`, `xᵢ²`, then `xᵢxⱼ` for `i < j`.
fn push_monomials(x: &[f64], degree: u8, out: &mut Vec<f64>) {
    out.push(1.0);
    if degree >= 1 {
        out.extend_from_slice(x);
    }
    if degree >= 2 {
        out.extend(x.iter().map(|v| v * v));
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                out.push(x[i] * x[j]);
            }
        }
    }
}

/// Evaluates the basis at the rows of `u` (`m × p`), returning `H` (`q × m`).
pub fn basis_eval(spec: &TrendSpec, model: Option<&JointInputModel>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if u.ncols() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            actual: u.ncols(),
        });
    }
    let q = spec.q();
    let m = u.nrows();
    let Some(degree) = spec.kind.degree() else {
        return Ok(DMatrix::zeros(0, m));
    };
    let points = if spec.kind.is_transformed() {
        let model = model.ok_or(Error::MissingInputModel)?;
        model.inverse_rows(u)?
    } else {
        u.clone()
    };
    let mut h = DMatrix::zeros(q, m);
    let mut row = Vec::with_capacity(spec.dim);
    let mut vals = Vec::with_capacity(q);
    for r in 0..m {
        row.clear();
        row.extend(points.row(r).iter().copied());
        vals.clear();
        push_monomials(&row, degree, &mut vals);
        h.column_mut(r).copy_from_slice(&vals);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Marginal;
    use crate::input_model::Correlation;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basis_counts() {
        assert_eq!(TrendKind::Zero.basis_count(4), 0);
        assert_eq!(TrendKind::Constant.basis_count(4), 1);
        assert_eq!(TrendKind::Linear.basis_count(4), 5);
        assert_eq!(TrendKind::TransformedLinear.basis_count(4), 5);
        assert_eq!(TrendKind::Quadratic.basis_count(2), 6);
        assert_eq!(TrendKind::Quadratic.basis_count(15), 136);
        assert_eq!(TrendKind::TransformedQuadratic.basis_count(15), 136);
    }

    #[test]
    fn tokens_round_trip() {
        for k in TrendKind::ALL {
            assert_eq!(k.token().parse::<TrendKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.token()));
        }
        assert!("cubic".parse::<TrendKind>().is_err());
    }

    #[test]
    fn constant_is_row_of_ones() {
        let u = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let h = basis_eval(&TrendSpec::new(TrendKind::Constant, 2), None, &u).unwrap();
        assert_eq!(h, DMatrix::from_element(1, 3, 1.0));
        let h0 = basis_eval(&TrendSpec::new(TrendKind::Zero, 2), None, &u).unwrap();
        assert_eq!(h0.shape(), (0, 3));
    }

    #[test]
    fn quadratic_column_order() {
        let u = DMatrix::from_row_slice(1, 2, &[0.5, 0.2]);
        let h = basis_eval(&TrendSpec::new(TrendKind::Quadratic, 2), None, &u).unwrap();
        let expect = [1.0, 0.5, 0.2, 0.25, 0.04, 0.1];
        for (a, b) in h.iter().zip(expect) {
            assert_relative_eq!(*a, b, max_relative = 1e-15);
        }
        let u3 = DMatrix::from_row_slice(1, 3, &[2.0, 3.0, 5.0]);
        let h3 = basis_eval(&TrendSpec::new(TrendKind::Quadratic, 3), None, &u3).unwrap();
        let got: Vec<f64> = h3.iter().copied().collect();
        assert_eq!(got, vec![1.0, 2.0, 3.0, 5.0, 4.0, 9.0, 25.0, 6.0, 10.0, 15.0]);
    }

    #[test]
    fn transformed_linear_is_quantile_function() {
        let uni = JointInputModel::independent(vec![Marginal::uniform(1.0, 10.0).unwrap()]).unwrap();
        let u = DMatrix::from_row_slice(1, 1, &[0.5]);
        let h = basis_eval(&TrendSpec::new(TrendKind::TransformedLinear, 1), Some(&uni), &u).unwrap();
        assert_eq!(h[(1, 0)], 5.5);
        let nrm = JointInputModel::independent(vec![Marginal::normal(0.0, 4.0).unwrap()]).unwrap();
        let h = basis_eval(&TrendSpec::new(TrendKind::TransformedLinear, 1), Some(&nrm), &u).unwrap();
        assert_eq!(h[(1, 0)], 0.0);
    }

    #[test]
    fn transformed_requires_model() {
        let u = DMatrix::from_row_slice(1, 1, &[0.5]);
        let r = basis_eval(&TrendSpec::new(TrendKind::TransformedQuadratic, 1), None, &u);
        assert!(matches!(r, Err(Error::MissingInputModel)));
    }

    #[test]
    fn standard_uniform_model_leaves_basis_unchanged() {
        let model = JointInputModel::independent(vec![Marginal::uniform(0.0, 1.0).unwrap(); 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = DMatrix::from_fn(20, 3, |_, _| rng.random::<f64>());
        for (plain, transformed) in [
            (TrendKind::Linear, TrendKind::TransformedLinear),
            (TrendKind::Quadratic, TrendKind::TransformedQuadratic),
        ] {
            let a = basis_eval(&TrendSpec::new(plain, 3), None, &u).unwrap();
            let b = basis_eval(&TrendSpec::new(transformed, 3), Some(&model), &u).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn transformed_linear_recovers_physical_coordinates() {
        let model = JointInputModel::with_correlations(
            vec![
                Marginal::lognormal(5.0, 0.5).unwrap(),
                Marginal::normal(2000.0, 400.0).unwrap(),
                Marginal::normal(500.0, 100.0).unwrap(),
            ],
            &[Correlation { i: 1, j: 2, rho: 0.5 }],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = model.sample(&mut rng, 50).unwrap();
        let u = model.forward_rows(&x).unwrap();
        let h = basis_eval(&TrendSpec::new(TrendKind::TransformedLinear, 3), Some(&model), &u).unwrap();
        for r in 0..50 {
            for c in 0..3 {
                assert_relative_eq!(h[(c + 1, r)], x[(r, c)], max_relative = 1e-9);
            }
        }
    }
}
