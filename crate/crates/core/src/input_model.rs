//! Joint input distributions and the Rosenblatt transformation.
//!
//! Dependence between inputs is modelled with a Gaussian copula (Nataf
//! model): the given Pearson coefficients are physical-space correlations,
//! and the matching correlations of the underlying normal scores are solved
//! pairwise at construction. Conditioning follows the input index order.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{clamp_unit, std_normal_cdf, std_normal_ppf, Marginal, NativeParams};
use crate::error::{Error, Result};

const HERMITE_ORDER: usize = 32;
const RHO_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "InputModelSpec", into = "InputModelSpec")]
pub struct JointInputModel {
    marginals: Vec<Marginal>,
    pearson_corr: DMatrix<f64>,
    copula_corr: DMatrix<f64>,
    copula_chol: DMatrix<f64>,
    independent: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub i: usize,
    pub j: usize,
    pub rho: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InputModelSpec {
    pub marginals: Vec<Marginal>,
    #[serde(default)]
    pub correlations: Vec<Correlation>,
}

impl TryFrom<InputModelSpec> for JointInputModel {
    type Error = Error;

    fn try_from(spec: InputModelSpec) -> Result<Self> {
        JointInputModel::with_correlations(spec.marginals, &spec.correlations)
    }
}

impl From<JointInputModel> for InputModelSpec {
    fn from(model: JointInputModel) -> Self {
        let p = model.dim();
        let mut correlations = Vec::new();
        for i in 0..p {
            for j in i + 1..p {
                let rho = model.pearson_corr[(i, j)];
                if rho != 0.0 {
                    correlations.push(Correlation { i, j, rho });
                }
            }
        }
        InputModelSpec {
            marginals: model.marginals,
            correlations,
        }
    }
}

impl JointInputModel {
    pub fn independent(marginals: Vec<Marginal>) -> Result<Self> {
        let p = marginals.len();
        Self::build(marginals, DMatrix::identity(p, p))
    }

    /// Builds a model from a sparse list of pairwise Pearson coefficients.
    pub fn with_correlations(marginals: Vec<Marginal>, correlations: &[Correlation]) -> Result<Self> {
        let p = marginals.len();
        let mut corr = DMatrix::identity(p, p);
        for c in correlations {
            if c.i >= p || c.j >= p || c.i == c.j {
                return Err(Error::InvalidParameter(format!(
                    "correlation index pair ({}, {}) invalid for dimension {p}",
                    c.i, c.j
                )));
            }
            corr[(c.i, c.j)] = c.rho;
            corr[(c.j, c.i)] = c.rho;
        }
        Self::build(marginals, corr)
    }

    pub fn build(marginals: Vec<Marginal>, pearson_corr: DMatrix<f64>) -> Result<Self> {
        let p = marginals.len();
        if p == 0 {
            return Err(Error::InvalidParameter("input model needs at least one marginal".into()));
        }
        if pearson_corr.shape() != (p, p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: pearson_corr.nrows(),
            });
        }
        let mut copula_corr = DMatrix::identity(p, p);
        let mut independent = true;
        for i in 0..p {
            if pearson_corr[(i, i)] != 1.0 {
                return Err(Error::InvalidParameter("correlation diagonal must be 1".into()));
            }
            for j in i + 1..p {
                let rho = pearson_corr[(i, j)];
                if rho != pearson_corr[(j, i)] {
                    return Err(Error::InvalidParameter("correlation matrix must be symmetric".into()));
                }
                if !(rho.abs() < 1.0) {
                    return Err(Error::InvalidParameter(format!("|rho| = {} must be < 1", rho.abs())));
                }
                if rho != 0.0 {
                    independent = false;
                    let rz = copula_correlation(&marginals[i], &marginals[j], rho)?;
                    copula_corr[(i, j)] = rz;
                    copula_corr[(j, i)] = rz;
                }
            }
        }
        let copula_chol = copula_corr
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?
            .unpack();
        Ok(JointInputModel {
            marginals,
            pearson_corr,
            copula_corr,
            copula_chol,
            independent,
        })
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    pub fn pearson_corr(&self) -> &DMatrix<f64> {
        &self.pearson_corr
    }

    pub fn copula_corr(&self) -> &DMatrix<f64> {
        &self.copula_corr
    }

    pub fn copula_chol(&self) -> &DMatrix<f64> {
        &self.copula_chol
    }

    pub fn is_independent(&self) -> bool {
        self.independent
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: len,
            });
        }
        Ok(())
    }

    /// Physical point to the i.i.d. uniform space.
    pub fn rosenblatt_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        for (m, &xi) in self.marginals.iter().zip(x) {
            if !m.in_support(xi) {
                return Err(Error::OutsideSupport {
                    what: format!("{:?}", m.kind()),
                    value: xi,
                });
            }
        }
        if self.independent {
            return Ok(self
                .marginals
                .iter()
                .zip(x)
                .map(|(m, &xi)| clamp_unit(m.cdf(xi)))
                .collect());
        }
        let z = DVector::from_iterator(
            x.len(),
            self.marginals.iter().zip(x).map(|(m, &xi)| m.normal_score(xi)),
        );
        let w = self
            .copula_chol
            .solve_lower_triangular(&z)
            .expect("copula Cholesky factor has a positive diagonal");
        Ok(w.iter().map(|&wi| clamp_unit(std_normal_cdf(wi))).collect())
    }

    /// Uniform point to the physical space.
    pub fn rosenblatt_inverse(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(u.len())?;
        if u.iter().any(|&ui| !(0.0..=1.0).contains(&ui)) {
            return Err(Error::InvalidParameter(format!("point {u:?} outside the unit hypercube")));
        }
        if self.independent {
            return self
                .marginals
                .iter()
                .zip(u)
                .map(|(m, &ui)| m.ppf(clamp_unit(ui)))
                .collect();
        }
        let w = DVector::from_iterator(u.len(), u.iter().map(|&ui| std_normal_ppf(clamp_unit(ui))));
        let z = &self.copula_chol * w;
        Ok(self
            .marginals
            .iter()
            .zip(z.iter())
            .map(|(m, &zi)| m.from_normal_score(zi))
            .collect())
    }

    /// Row-wise inverse transform of an `m × p` matrix.
    pub fn inverse_rows(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(u.ncols())?;
        let mut x = DMatrix::zeros(u.nrows(), u.ncols());
        let mut row = vec![0.0; u.ncols()];
        for r in 0..u.nrows() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = u[(r, c)];
            }
            for (c, v) in self.rosenblatt_inverse(&row)?.into_iter().enumerate() {
                x[(r, c)] = v;
            }
        }
        Ok(x)
    }

    /// Row-wise forward transform of an `m × p` matrix.
    pub fn forward_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x.ncols())?;
        let mut u = DMatrix::zeros(x.nrows(), x.ncols());
        let mut row = vec![0.0; x.ncols()];
        for r in 0..x.nrows() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = x[(r, c)];
            }
            for (c, v) in self.rosenblatt_forward(&row)?.into_iter().enumerate() {
                u[(r, c)] = v;
            }
        }
        Ok(u)
    }

    /// Draws `count` physical points. Returns `(u, x)` with `x` the inverse
    /// transform of the i.i.d. uniform rows `u`.
    pub fn sample_with_uniform<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        count: usize,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if count == 0 {
            return Err(Error::InvalidParameter("sample count must be at least 1".into()));
        }
        let p = self.dim();
        // row-major draw order
        let mut u = DMatrix::zeros(count, p);
        for r in 0..count {
            for c in 0..p {
                u[(r, c)] = clamp_unit(rng.random::<f64>());
            }
        }
        let x = self.inverse_rows(&u)?;
        Ok((u, x))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<DMatrix<f64>> {
        Ok(self.sample_with_uniform(rng, count)?.1)
    }
}

/// Solves for the normal-score correlation that reproduces the physical
/// Pearson correlation `rho_x` between two marginals.
pub fn copula_correlation(a: &Marginal, b: &Marginal, rho_x: f64) -> Result<f64> {
    match (a.native(), b.native()) {
        (NativeParams::Normal { .. }, NativeParams::Normal { .. }) => Ok(rho_x),
        (NativeParams::Lognormal { sigma: s1, .. }, NativeParams::Lognormal { sigma: s2, .. }) => {
            let arg = 1.0 + rho_x * (s1 * s1).exp_m1().sqrt() * (s2 * s2).exp_m1().sqrt();
            if arg <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "correlation {rho_x} not attainable by the lognormal pair"
                )));
            }
            let rz = arg.ln() / (s1 * s2);
            if rz.abs() >= 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "correlation {rho_x} not attainable by the lognormal pair"
                )));
            }
            Ok(rz)
        }
        _ => solve_copula_correlation(a, b, rho_x),
    }
}

/// Gauss–Hermite nodes and weights for the standard normal density.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    // Golub–Welsch on the probabilists' Hermite Jacobi matrix
    let mut jacobi = DMatrix::zeros(order, order);
    for k in 1..order {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|l, r| l.0.total_cmp(&r.0));
    pairs.into_iter().unzip()
}

/// Physical Pearson correlation implied by copula correlation `rz`.
fn implied_pearson(a: &Marginal, b: &Marginal, rz: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let moments = |m: &Marginal| {
        let mean: f64 = nodes.iter().zip(weights).map(|(&z, &w)| w * m.from_normal_score(z)).sum();
        let var: f64 = nodes
            .iter()
            .zip(weights)
            .map(|(&z, &w)| w * (m.from_normal_score(z) - mean).powi(2))
            .sum();
        (mean, var.sqrt())
    };
    let (ma, sa) = moments(a);
    let (mb, sb) = moments(b);
    let c = (1.0 - rz * rz).sqrt();
    let mut cov = 0.0;
    for (&z1, &w1) in nodes.iter().zip(weights) {
        let xa = a.from_normal_score(z1) - ma;
        for (&z2, &w2) in nodes.iter().zip(weights) {
            cov += w1 * w2 * xa * (b.from_normal_score(rz * z1 + c * z2) - mb);
        }
    }
    cov / (sa * sb)
}

fn solve_copula_correlation(a: &Marginal, b: &Marginal, rho_x: f64) -> Result<f64> {
    let (nodes, weights) = gauss_hermite(HERMITE_ORDER);
    let f = |rz: f64| implied_pearson(a, b, rz, &nodes, &weights) - rho_x;
    let limit = 1.0 - 1e-9;
    let (mut lo, mut hi) = (-limit, limit);
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "correlation {rho_x} not attainable between {:?} and {:?}",
            a.kind(),
            b.kind()
        )));
    }
    while hi - lo > RHO_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for (a, b) in x.iter().zip(y) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx).powi(2);
            syy += (b - my).powi(2);
        }
        sxy / (sxx * syy).sqrt()
    }

    fn short_column() -> JointInputModel {
        JointInputModel::with_correlations(
            vec![
                Marginal::lognormal(5.0, 0.5).unwrap(),
                Marginal::normal(2000.0, 400.0).unwrap(),
                Marginal::normal(500.0, 100.0).unwrap(),
            ],
            &[Correlation { i: 1, j: 2, rho: 0.5 }],
        )
        .unwrap()
    }

    #[test]
    fn normal_pair_copula_is_identity_map() {
        let m = JointInputModel::with_correlations(
            vec![Marginal::normal(2000.0, 400.0).unwrap(), Marginal::normal(500.0, 100.0).unwrap()],
            &[Correlation { i: 0, j: 1, rho: 0.5 }],
        )
        .unwrap();
        assert_eq!(m.copula_corr()[(0, 1)], 0.5);
    }

    #[test]
    fn lognormal_pair_closed_form() {
        let ln = Marginal::lognormal(1.0, 0.5).unwrap();
        let rz = copula_correlation(&ln, &ln, 0.3).unwrap();
        let s2 = 1.25f64.ln();
        assert_relative_eq!(rz, (1.0 + 0.3 * s2.exp_m1()).ln() / s2, max_relative = 1e-14);
        assert_relative_eq!(rz, 0.324099, epsilon = 1e-6);
        // the generic quadrature route agrees with the closed form
        let numeric = solve_copula_correlation(&ln, &ln, 0.3).unwrap();
        assert_relative_eq!(numeric, rz, epsilon = 1e-6);
    }

    #[test]
    fn lognormal_pair_monte_carlo_correlation() {
        let ln = Marginal::lognormal(1.0, 0.5).unwrap();
        let m = JointInputModel::with_correlations(vec![ln, ln], &[Correlation { i: 0, j: 1, rho: 0.3 }])
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = m.sample(&mut rng, 1_000_000).unwrap();
        let r = pearson(x.column(0).as_slice(), x.column(1).as_slice());
        assert!((r - 0.3).abs() < 0.01, "{r}");
    }

    #[test]
    fn generic_pair_reproduces_target() {
        let a = Marginal::gumbel(6e5, 9e4).unwrap();
        let b = Marginal::uniform(1.0, 10.0).unwrap();
        let rz = copula_correlation(&a, &b, 0.4).unwrap();
        let m = JointInputModel::with_correlations(vec![a, b], &[Correlation { i: 0, j: 1, rho: 0.4 }])
            .unwrap();
        assert_eq!(m.copula_corr()[(0, 1)], rz);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = m.sample(&mut rng, 400_000).unwrap();
        let r = pearson(x.column(0).as_slice(), x.column(1).as_slice());
        assert!((r - 0.4).abs() < 0.01, "{r}");
    }

    #[test]
    fn gauss_hermite_integrates_normal_moments() {
        let (z, w) = gauss_hermite(32);
        let m0: f64 = w.iter().sum();
        let m2: f64 = z.iter().zip(&w).map(|(z, w)| w * z * z).sum();
        let m4: f64 = z.iter().zip(&w).map(|(z, w)| w * z.powi(4)).sum();
        assert_relative_eq!(m0, 1.0, epsilon = 1e-12);
        assert_relative_eq!(m2, 1.0, epsilon = 1e-10);
        assert_relative_eq!(m4, 3.0, epsilon = 1e-9);
    }

    #[test]
    fn identity_correlation_gives_identity_copula() {
        let m = JointInputModel::independent(vec![Marginal::normal(0.0, 1.0).unwrap(); 3]).unwrap();
        assert_eq!(m.copula_corr(), &DMatrix::<f64>::identity(3, 3));
        assert!(m.is_independent());
    }

    #[test]
    fn forward_examples() {
        let u1 = JointInputModel::independent(vec![Marginal::uniform(1.0, 10.0).unwrap()]).unwrap();
        assert_eq!(u1.rosenblatt_forward(&[5.5]).unwrap(), vec![0.5]);
        assert_eq!(u1.rosenblatt_inverse(&[0.5]).unwrap(), vec![5.5]);
        let n1 = JointInputModel::independent(vec![Marginal::normal(0.0, 4.0).unwrap()]).unwrap();
        assert_relative_eq!(n1.rosenblatt_forward(&[0.0]).unwrap()[0], 0.5, epsilon = 1e-15);

        let bn = JointInputModel::with_correlations(
            vec![Marginal::normal(2000.0, 400.0).unwrap(), Marginal::normal(500.0, 100.0).unwrap()],
            &[Correlation { i: 0, j: 1, rho: 0.5 }],
        )
        .unwrap();
        let u = bn.rosenblatt_forward(&[2000.0, 600.0]).unwrap();
        assert_relative_eq!(u[0], 0.5, epsilon = 1e-15);
        // conditional normal: (z2 - rho z1)/sqrt(1 - rho^2)
        let expect = std_normal_cdf(1.0 / 0.75f64.sqrt());
        assert_relative_eq!(u[1], expect, epsilon = 1e-14);
        assert_relative_eq!(u[1], 0.875893, epsilon = 1e-6);
    }

    #[test]
    fn forward_matches_conditional_ranks_by_monte_carlo() {
        // u2 should be the rank of x2 among draws sharing x1's value
        let bn = JointInputModel::with_correlations(
            vec![Marginal::normal(2000.0, 400.0).unwrap(), Marginal::normal(500.0, 100.0).unwrap()],
            &[Correlation { i: 0, j: 1, rho: 0.5 }],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = bn.sample(&mut rng, 400_000).unwrap();
        let (mut below, mut total) = (0usize, 0usize);
        for r in 0..x.nrows() {
            if (x[(r, 0)] - 2000.0).abs() < 8.0 {
                total += 1;
                if x[(r, 1)] <= 600.0 {
                    below += 1;
                }
            }
        }
        let frac = below as f64 / total as f64;
        assert!((frac - 0.875893).abs() < 0.01, "{frac} over {total}");
    }

    #[test]
    fn short_column_medians() {
        let m = short_column();
        let x = m.rosenblatt_inverse(&[0.5, 0.5, 0.5]).unwrap();
        let NativeParams::Lognormal { mu, .. } = m.marginals()[0].native() else { unreachable!() };
        assert_relative_eq!(x[0], mu.exp(), max_relative = 1e-14);
        assert_relative_eq!(x[1], 2000.0, max_relative = 1e-14);
        assert_relative_eq!(x[2], 500.0, max_relative = 1e-14);
    }

    #[test]
    fn round_trips() {
        let m = short_column();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let u: Vec<f64> = (0..3).map(|_| clamp_unit(rng.random::<f64>())).collect();
            let x = m.rosenblatt_inverse(&u).unwrap();
            let back = m.rosenblatt_forward(&x).unwrap();
            for (a, b) in u.iter().zip(&back) {
                assert!((a - b).abs() < 1e-8);
            }
            let again = m.rosenblatt_inverse(&back).unwrap();
            for (a, b) in x.iter().zip(&again) {
                assert_relative_eq!(*a, *b, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn errors() {
        let m = short_column();
        assert!(matches!(m.rosenblatt_forward(&[-1.0, 2000.0, 500.0]), Err(Error::OutsideSupport { .. })));
        assert!(matches!(m.rosenblatt_forward(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        assert!(m.rosenblatt_inverse(&[0.5, 1.5, 0.5]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(m.sample(&mut rng, 0).is_err());
        let bad = JointInputModel::with_correlations(
            vec![Marginal::normal(0.0, 1.0).unwrap(); 2],
            &[Correlation { i: 0, j: 1, rho: 1.0 }],
        );
        assert!(bad.is_err());
        // pairwise-valid but jointly indefinite
        let indefinite = JointInputModel::with_correlations(
            vec![Marginal::normal(0.0, 1.0).unwrap(); 3],
            &[
                Correlation { i: 0, j: 1, rho: 0.9 },
                Correlation { i: 0, j: 2, rho: 0.9 },
                Correlation { i: 1, j: 2, rho: -0.9 },
            ],
        );
        assert!(matches!(indefinite, Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn transformed_samples_are_uniform_and_uncorrelated() {
        let m = short_column();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 10_000;
        let x = m.sample(&mut rng, n).unwrap();
        let u = m.forward_rows(&x).unwrap();
        // Kolmogorov–Smirnov 1% critical value ~ 1.628/sqrt(n)
        let crit = 1.628 / (n as f64).sqrt();
        for c in 0..3 {
            let mut col: Vec<f64> = u.column(c).iter().copied().collect();
            col.sort_by(f64::total_cmp);
            let d = col
                .iter()
                .enumerate()
                .map(|(i, &v)| ((i + 1) as f64 / n as f64 - v).max(v - i as f64 / n as f64))
                .fold(0.0, f64::max);
            assert!(d < crit, "column {c}: D = {d}");
        }
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let r = pearson(u.column(a).as_slice(), u.column(b).as_slice());
            assert!(r.abs() < 0.03, "({a},{b}): {r}");
        }
    }

    #[test]
    fn json_schema() {
        let text = r#"{"marginals":[{"kind":"lognormal","mean":1,"std":0.5},{"kind":"lognormal","mean":1,"std":0.5}],
                       "correlations":[{"i":0,"j":1,"rho":0.3}]}"#;
        let m: JointInputModel = serde_json::from_str(text).unwrap();
        assert_eq!(m.pearson_corr()[(1, 0)], 0.3);
        let back: JointInputModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back.copula_corr(), m.copula_corr());
    }
}
