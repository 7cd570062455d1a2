//! One-dimensional marginal distributions parameterized by their first two
//! moments (or by their bounds, for the uniform law).
//!
//! Every marginal exposes `pdf`, `cdf` and `ppf`. The standard normal
//! helpers at the bottom of the module are shared with the Gaussian-copula
//! machinery in [`crate::input_model`].

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Callers clamp probabilities into `[EPS_U, 1 - EPS_U]` before calling `ppf`.
pub const EPS_U: f64 = 1e-12;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const WEIBULL_SHAPE_BRACKET: (f64, f64) = (0.05, 500.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistKind {
    Normal,
    Lognormal,
    Uniform,
    Weibull,
    Gumbel,
}

/// Native parameterization, solved once at construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NativeParams {
    Normal { mean: f64, std: f64 },
    /// Parameters of the underlying normal of `ln x`.
    Lognormal { mu: f64, sigma: f64 },
    Uniform { lower: f64, upper: f64 },
    Weibull { shape: f64, scale: f64 },
    /// Maximum-type Gumbel.
    Gumbel { location: f64, scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarginalSpec", into = "MarginalSpec")]
pub struct Marginal {
    kind: DistKind,
    native: NativeParams,
    /// (mean, std) or (lower, upper) as given to the constructor.
    moments: (f64, f64),
}

/// JSON form of a marginal.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MarginalSpec {
    Normal { mean: f64, std: f64 },
    Lognormal { mean: f64, std: f64 },
    Uniform { lower: f64, upper: f64 },
    Weibull { mean: f64, std: f64 },
    Gumbel { mean: f64, std: f64 },
}

impl TryFrom<MarginalSpec> for Marginal {
    type Error = Error;

    fn try_from(spec: MarginalSpec) -> Result<Self> {
        match spec {
            MarginalSpec::Normal { mean, std } => Marginal::from_moments(DistKind::Normal, mean, std),
            MarginalSpec::Lognormal { mean, std } => {
                Marginal::from_moments(DistKind::Lognormal, mean, std)
            }
            MarginalSpec::Uniform { lower, upper } => {
                Marginal::from_moments(DistKind::Uniform, lower, upper)
            }
            MarginalSpec::Weibull { mean, std } => Marginal::from_moments(DistKind::Weibull, mean, std),
            MarginalSpec::Gumbel { mean, std } => Marginal::from_moments(DistKind::Gumbel, mean, std),
        }
    }
}

impl From<Marginal> for MarginalSpec {
    fn from(m: Marginal) -> Self {
        let (a, b) = m.moments;
        match m.kind {
            DistKind::Normal => MarginalSpec::Normal { mean: a, std: b },
            DistKind::Lognormal => MarginalSpec::Lognormal { mean: a, std: b },
            DistKind::Uniform => MarginalSpec::Uniform { lower: a, upper: b },
            DistKind::Weibull => MarginalSpec::Weibull { mean: a, std: b },
            DistKind::Gumbel => MarginalSpec::Gumbel { mean: a, std: b },
        }
    }
}

impl Marginal {
    /// Builds a marginal from `(mean, std)`, or from `(lower, upper)` for
    /// [`DistKind::Uniform`].
    pub fn from_moments(kind: DistKind, a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite parameters ({a}, {b})")));
        }
        let native = match kind {
            DistKind::Uniform => {
                if b <= a {
                    return Err(Error::InvalidParameter(format!(
                        "uniform upper bound {b} must exceed lower bound {a}"
                    )));
                }
                NativeParams::Uniform { lower: a, upper: b }
            }
            _ if b <= 0.0 => {
                return Err(Error::InvalidParameter(format!("standard deviation {b} must be positive")));
            }
            DistKind::Normal => NativeParams::Normal { mean: a, std: b },
            DistKind::Lognormal => {
                if a <= 0.0 {
                    return Err(Error::InvalidParameter(format!("lognormal mean {a} must be positive")));
                }
                let var_ln = (b / a).powi(2).ln_1p();
                NativeParams::Lognormal {
                    mu: a.ln() - 0.5 * var_ln,
                    sigma: var_ln.sqrt(),
                }
            }
            DistKind::Gumbel => {
                let scale = b * 6f64.sqrt() / PI;
                NativeParams::Gumbel {
                    location: a - EULER_GAMMA * scale,
                    scale,
                }
            }
            DistKind::Weibull => {
                if a <= 0.0 {
                    return Err(Error::InvalidParameter(format!("weibull mean {a} must be positive")));
                }
                let shape = weibull_shape(b / a)?;
                NativeParams::Weibull {
                    shape,
                    scale: a / ln_gamma(1.0 + 1.0 / shape).exp(),
                }
            }
        };
        Ok(Marginal {
            kind,
            native,
            moments: (a, b),
        })
    }

    pub fn normal(mean: f64, std: f64) -> Result<Self> {
        Self::from_moments(DistKind::Normal, mean, std)
    }

    pub fn lognormal(mean: f64, std: f64) -> Result<Self> {
        Self::from_moments(DistKind::Lognormal, mean, std)
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        Self::from_moments(DistKind::Uniform, lower, upper)
    }

    pub fn weibull(mean: f64, std: f64) -> Result<Self> {
        Self::from_moments(DistKind::Weibull, mean, std)
    }

    pub fn gumbel(mean: f64, std: f64) -> Result<Self> {
        Self::from_moments(DistKind::Gumbel, mean, std)
    }

    pub fn kind(&self) -> DistKind {
        self.kind
    }

    pub fn native(&self) -> NativeParams {
        self.native
    }

    /// Constructor arguments, kept for reporting.
    pub fn moments(&self) -> (f64, f64) {
        self.moments
    }

    /// Closed support interval (possibly infinite).
    pub fn support(&self) -> (f64, f64) {
        match self.native {
            NativeParams::Normal { .. } | NativeParams::Gumbel { .. } => {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
            NativeParams::Lognormal { .. } | NativeParams::Weibull { .. } => (0.0, f64::INFINITY),
            NativeParams::Uniform { lower, upper } => (lower, upper),
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        let (lo, hi) = self.support();
        match self.native {
            // x = 0 has zero density and an infinite normal score.
            NativeParams::Lognormal { .. } | NativeParams::Weibull { .. } => x > lo && x < hi,
            _ => x >= lo && x <= hi,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self.native {
            NativeParams::Normal { mean, std } => std_normal_pdf((x - mean) / std) / std,
            NativeParams::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    std_normal_pdf((x.ln() - mu) / sigma) / (x * sigma)
                }
            }
            NativeParams::Uniform { lower, upper } => {
                if x < lower || x > upper {
                    0.0
                } else {
                    1.0 / (upper - lower)
                }
            }
            NativeParams::Weibull { shape, scale } => {
                if x < 0.0 {
                    0.0
                } else {
                    let t = x / scale;
                    shape / scale * t.powf(shape - 1.0) * (-t.powf(shape)).exp()
                }
            }
            NativeParams::Gumbel { location, scale } => {
                let z = (x - location) / scale;
                (-(z + (-z).exp())).exp() / scale
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let p = match self.native {
            NativeParams::Normal { mean, std } => std_normal_cdf((x - mean) / std),
            NativeParams::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    std_normal_cdf((x.ln() - mu) / sigma)
                }
            }
            NativeParams::Uniform { lower, upper } => (x - lower) / (upper - lower),
            NativeParams::Weibull { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-(x / scale).powf(shape)).exp_m1()
                }
            }
            NativeParams::Gumbel { location, scale } => {
                (-(-(x - location) / scale).exp()).exp()
            }
        };
        p.clamp(0.0, 1.0)
    }

    /// Quantile function. `u` must lie in the open unit interval.
    pub fn ppf(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::InvalidParameter(format!("probability {u} outside (0, 1)")));
        }
        Ok(match self.native {
            NativeParams::Normal { mean, std } => mean + std * std_normal_ppf(u),
            NativeParams::Lognormal { mu, sigma } => (mu + sigma * std_normal_ppf(u)).exp(),
            NativeParams::Uniform { lower, upper } => lower + u * (upper - lower),
            NativeParams::Weibull { shape, scale } => scale * (-(-u).ln_1p()).powf(1.0 / shape),
            NativeParams::Gumbel { location, scale } => location - scale * (-u.ln()).ln(),
        })
    }

    /// Normal score `Φ⁻¹(F(x))`, evaluated without the round trip through
    /// a probability where a direct route exists.
    pub fn normal_score(&self, x: f64) -> f64 {
        match self.native {
            NativeParams::Normal { mean, std } => (x - mean) / std,
            NativeParams::Lognormal { mu, sigma } => (x.ln() - mu) / sigma,
            _ => std_normal_ppf(self.cdf(x)),
        }
    }

    /// Inverse of [`Marginal::normal_score`].
    pub fn from_normal_score(&self, z: f64) -> f64 {
        match self.native {
            NativeParams::Normal { mean, std } => mean + std * z,
            NativeParams::Lognormal { mu, sigma } => (mu + sigma * z).exp(),
            _ => {
                let u = clamp_unit(std_normal_cdf(z));
                // clamp_unit keeps u inside (0, 1)
                self.ppf(u).expect("clamped probability")
            }
        }
    }
}

/// Solves `Γ(1+2/k)/Γ(1+1/k)² − 1 = cv²` for the Weibull shape `k`.
fn weibull_shape(cv: f64) -> Result<f64> {
    let target = cv * cv;
    let residual = |k: f64| (ln_gamma(1.0 + 2.0 / k) - 2.0 * ln_gamma(1.0 + 1.0 / k)).exp_m1() - target;
    let (mut lo, mut hi) = WEIBULL_SHAPE_BRACKET;
    let (r_lo, r_hi) = (residual(lo), residual(hi));
    // residual is decreasing in k
    if !(r_lo > 0.0 && r_hi < 0.0) {
        return Err(Error::WeibullShape { cv, lo, hi });
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn clamp_unit(u: f64) -> f64 {
    u.clamp(EPS_U, 1.0 - EPS_U)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Inverse of the standard normal cdf.
///
/// Acklam's rational approximation (relative error ~1e-9) refined by one
/// Halley step on the cdf residual. Returns ±∞ at 0 and 1.
pub fn std_normal_ppf(p: f64) -> f64 {
    if p.is_nan() {
        return f64::NAN;
    }
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        // 1 - p is exact here
        return -lower_ppf(1.0 - p);
    }
    lower_ppf(p)
}

fn lower_ppf(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };

    // Halley step
    let e = std_normal_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Adaptive Simpson quadrature, used as an independent oracle.
    fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
        }
        #[allow(clippy::too_many_arguments)]
        fn recurse(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            fa: f64,
            b: f64,
            fb: f64,
            m: f64,
            fm: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let (lm, flm, left) = simpson(f, a, fa, m, fm);
            let (rm, frm, right) = simpson(f, m, fm, b, fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                return left + right + delta / 15.0;
            }
            recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
        }
        let (fa, fb) = (f(a), f(b));
        let (m, fm, whole) = simpson(f, a, fa, b, fb);
        recurse(f, a, fa, b, fb, m, fm, whole, tol, 50)
    }

    fn all_kinds() -> Vec<Marginal> {
        vec![
            Marginal::normal(0.0, 4.0).unwrap(),
            Marginal::lognormal(1.0, 0.5).unwrap(),
            Marginal::uniform(1.0, 10.0).unwrap(),
            Marginal::weibull(2.1e5, 4200.0).unwrap(),
            Marginal::weibull(1.0, 0.6).unwrap(),
            Marginal::gumbel(6e5, 9e4).unwrap(),
        ]
    }

    /// Finite integration window covering all but ~1e-13 of the mass.
    fn window(m: &Marginal) -> (f64, f64) {
        let (lo, hi) = m.support();
        let a = if lo.is_finite() { lo } else { m.ppf(1e-14).unwrap() };
        let b = if hi.is_finite() { hi } else { m.ppf(1.0 - 1e-14).unwrap() };
        (a, b)
    }

    #[test]
    fn uniform_is_identity_parameterized() {
        let m = Marginal::from_moments(DistKind::Uniform, 1.0, 10.0).unwrap();
        assert_eq!(m.native(), NativeParams::Uniform { lower: 1.0, upper: 10.0 });
    }

    #[test]
    fn lognormal_moment_matching() {
        let m = Marginal::lognormal(1.0, 0.5).unwrap();
        let NativeParams::Lognormal { mu, sigma } = m.native() else {
            panic!("wrong kind")
        };
        assert_relative_eq!(sigma, 1.25f64.ln().sqrt(), max_relative = 1e-14);
        assert_relative_eq!(sigma, 0.472381, epsilon = 1e-6);
        assert_relative_eq!(mu, -0.111572, epsilon = 1e-6);
    }

    #[test]
    fn gumbel_moment_matching() {
        let m = Marginal::gumbel(6e5, 9e4).unwrap();
        let NativeParams::Gumbel { location, scale } = m.native() else {
            panic!("wrong kind")
        };
        assert_relative_eq!(scale, 9e4 * 6f64.sqrt() / std::f64::consts::PI, max_relative = 1e-14);
        assert_relative_eq!(scale, 70172.71, epsilon = 0.01);
        assert_relative_eq!(location, 6e5 - 0.577_215_664_901_532_9 * scale, max_relative = 1e-14);
        assert_relative_eq!(location, 559495.3, epsilon = 0.1);
    }

    #[test]
    fn integrated_moments_recover_constructor_moments() {
        for m in all_kinds() {
            if m.kind() == DistKind::Uniform {
                continue;
            }
            let (a, b) = window(&m);
            let (mean, std) = m.moments();
            let int_mean = integrate(&|x| x * m.pdf(x), a, b, 1e-10 * mean.abs().max(1.0));
            let int_var = integrate(&|x| (x - int_mean).powi(2) * m.pdf(x), a, b, 1e-10 * std * std);
            assert_relative_eq!(int_mean, mean, max_relative = 1e-4, epsilon = 1e-9 * std);
            assert_relative_eq!(int_var.sqrt(), std, max_relative = 1e-4);
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        for m in all_kinds() {
            let (a, b) = window(&m);
            let mass = integrate(&|x| m.pdf(x), a, b, 1e-12);
            assert!((mass - 1.0).abs() < 1e-6, "{:?}: {mass}", m.kind());
        }
    }

    #[test]
    fn pdf_examples() {
        let n = Marginal::normal(0.0, 4.0).unwrap();
        assert_relative_eq!(n.pdf(0.0), 1.0 / (4.0 * (2.0 * PI).sqrt()), max_relative = 1e-14);
        assert_relative_eq!(n.pdf(0.0), 0.0997356, epsilon = 1e-7);
        let u = Marginal::uniform(1.0, 10.0).unwrap();
        assert_relative_eq!(u.pdf(5.0), 1.0 / 9.0);
        assert_eq!(u.pdf(0.0), 0.0);
    }

    #[test]
    fn cdf_examples() {
        let n = Marginal::normal(3.0, 2.0).unwrap();
        assert_relative_eq!(n.cdf(3.0), 0.5, epsilon = 1e-15);
        let u = Marginal::uniform(1.0, 10.0).unwrap();
        assert_relative_eq!(u.cdf(5.5), 0.5);
        let ln = Marginal::lognormal(1.0, 0.5).unwrap();
        let NativeParams::Lognormal { mu, .. } = ln.native() else { unreachable!() };
        assert_relative_eq!(ln.cdf(mu.exp()), 0.5, epsilon = 1e-15);
        assert_eq!(u.cdf(-3.0), 0.0);
        assert_eq!(u.cdf(30.0), 1.0);
    }

    #[test]
    fn ppf_examples() {
        assert_eq!(Marginal::normal(0.0, 4.0).unwrap().ppf(0.5).unwrap(), 0.0);
        assert_relative_eq!(Marginal::uniform(1.0, 10.0).unwrap().ppf(0.25).unwrap(), 3.25);
        // oracle: bisection of the cdf
        let n = Marginal::normal(0.0, 1.0).unwrap();
        let (mut lo, mut hi) = (0.0, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if n.cdf(mid) < 0.975 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let x = n.ppf(0.975).unwrap();
        assert_relative_eq!(x, lo, epsilon = 1e-12);
        assert_relative_eq!(x, 1.959964, epsilon = 1e-6);
    }

    #[test]
    fn ppf_rejects_closed_interval() {
        let n = Marginal::normal(0.0, 1.0).unwrap();
        for u in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(n.ppf(u).is_err());
        }
    }

    #[test]
    fn invalid_constructor_arguments() {
        assert!(Marginal::normal(0.0, 0.0).is_err());
        assert!(Marginal::gumbel(1.0, -1.0).is_err());
        assert!(Marginal::uniform(2.0, 2.0).is_err());
        assert!(Marginal::lognormal(-1.0, 1.0).is_err());
        // cv far below the shape bracket
        assert!(matches!(
            Marginal::weibull(1.0, 1e-5),
            Err(Error::WeibullShape { .. })
        ));
    }

    #[test]
    fn weibull_shape_for_small_cv() {
        let m = Marginal::weibull(2.1e5, 4200.0).unwrap();
        let NativeParams::Weibull { shape, .. } = m.native() else { unreachable!() };
        assert!(shape > 50.0 && shape < 80.0, "{shape}");
    }

    #[test]
    fn cdf_ppf_round_trip_log_spaced() {
        for m in all_kinds() {
            for i in 0..1000 {
                let t = i as f64 / 999.0;
                // log-spaced towards both tails
                let tail = (1e-6f64.ln() + t * (0.5f64.ln() - 1e-6f64.ln())).exp();
                for u in [tail, 1.0 - tail] {
                    let x = m.ppf(u).unwrap();
                    let err = (m.cdf(x) - u).abs();
                    assert!(err < 1e-9, "{:?} u={u} err={err}", m.kind());
                }
            }
        }
    }

    #[test]
    fn ppf_of_cdf_recovers_x() {
        for m in all_kinds() {
            for i in 1..200 {
                let x = m.ppf(1e-4 + (1.0 - 2e-4) * i as f64 / 200.0).unwrap();
                let back = m.ppf(m.cdf(x)).unwrap();
                assert_relative_eq!(back, x, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn monte_carlo_moments_within_three_standard_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let count = 1_000_000;
        for m in all_kinds() {
            if m.kind() == DistKind::Uniform {
                continue;
            }
            let (mean, std) = m.moments();
            let draws: Vec<f64> = (0..count)
                .map(|_| m.ppf(clamp_unit(rng.random::<f64>())).unwrap())
                .collect();
            let mc_mean = draws.iter().sum::<f64>() / count as f64;
            let mc_var =
                draws.iter().map(|x| (x - mc_mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            let se_mean = std / (count as f64).sqrt();
            assert!((mc_mean - mean).abs() < 3.0 * se_mean, "{:?}", m.kind());
            // SE of the sample std; kurtosis bounded loosely by the sample itself
            let m4 = draws.iter().map(|x| (x - mc_mean).powi(4)).sum::<f64>() / count as f64;
            let se_var = ((m4 - mc_var * mc_var) / count as f64).sqrt();
            let se_std = se_var / (2.0 * std);
            assert!((mc_var.sqrt() - std).abs() < 3.0 * se_std, "{:?}", m.kind());
        }
    }

    #[test]
    fn cdf_is_monotone_and_pdf_nonnegative() {
        for m in all_kinds() {
            let (a, b) = window(&m);
            let mut prev = 0.0;
            for i in 0..=500 {
                let x = a + (b - a) * i as f64 / 500.0;
                let c = m.cdf(x);
                assert!(c >= prev);
                assert!(m.pdf(x) >= 0.0);
                prev = c;
            }
        }
        let u = Marginal::uniform(1.0, 10.0).unwrap();
        assert_eq!(u.cdf(1.0), 0.0);
        assert_eq!(u.cdf(10.0), 1.0);
        let w = Marginal::weibull(1.0, 0.6).unwrap();
        assert_eq!(w.cdf(0.0), 0.0);
    }

    #[test]
    fn json_forms() {
        let m: Marginal = serde_json::from_str(r#"{"kind":"lognormal","mean":1.0,"std":0.5}"#).unwrap();
        assert_eq!(m, Marginal::lognormal(1.0, 0.5).unwrap());
        let u: Marginal = serde_json::from_str(r#"{"kind":"uniform","lower":1,"upper":10}"#).unwrap();
        assert_eq!(u.moments(), (1.0, 10.0));
        let text = serde_json::to_string(&u).unwrap();
        assert_eq!(text, r#"{"kind":"uniform","lower":1.0,"upper":10.0}"#);
        assert!(serde_json::from_str::<Marginal>(r#"{"kind":"normal","mean":0,"std":-1}"#).is_err());
    }

    #[test]
    fn normal_score_matches_cdf_route() {
        for m in all_kinds() {
            for u in [0.01, 0.3, 0.5, 0.77, 0.99] {
                let x = m.ppf(u).unwrap();
                assert_relative_eq!(m.normal_score(x), std_normal_ppf(u), epsilon = 1e-9);
                assert_relative_eq!(m.from_normal_score(std_normal_ppf(u)), x, max_relative = 1e-9);
            }
        }
    }
}
