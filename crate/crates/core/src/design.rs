//! Maximin Latin hypercube designs in the unit hypercube.

use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_BUDGET: usize = 10_000;

#[derive(Clone, Debug)]
pub struct Design {
    /// `n × p`, one point per row.
    pub points: DMatrix<f64>,
    pub seed: u64,
    pub budget: usize,
    /// Smallest pairwise Euclidean distance of the returned design.
    pub min_distance: f64,
    /// Minimum distance after the initial design and after each accepted swap.
    pub history: Vec<f64>,
}

impl Design {
    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn p(&self) -> usize {
        self.points.ncols()
    }

    /// Headerless CSV, one point per row, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for r in 0..self.n() {
            let row: Vec<String> = (0..self.p()).map(|c| format!("{:.16e}", self.points[(r, c)])).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Stratum-midpoint Latin hypercube improved by column-wise pair swaps.
///
/// Each proposal swaps the levels of two rows in one column, one of them an
/// endpoint of a currently closest pair. A swap is kept only if it raises
/// the minimum distance, or keeps it and reduces the number of pairs at that
/// distance. Distances are tracked exactly on the integer level lattice.
pub fn maximin_lhs(n: usize, p: usize, seed: u64, budget: usize) -> Result<Design> {
    if n < 2 || p < 1 {
        return Err(Error::InvalidParameter(format!("maximin LHS needs n >= 2 and p >= 1 (got n={n}, p={p})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels: Vec<Vec<i64>> = (0..p)
        .map(|_| {
            let mut col: Vec<i64> = (0..n as i64).collect();
            col.shuffle(&mut rng);
            col
        })
        .collect();

    let mut dist = vec![0i64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d: i64 = levels.iter().map(|col| (col[i] - col[j]).pow(2)).sum();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    let scale = n as f64;
    let mut best = score(&dist, n);
    let mut history = vec![(best.min as f64).sqrt() / scale];

    for _ in 0..budget {
        let c = rng.random_range(0..p);
        let a = if rng.random_bool(0.5) { best.pair.0 } else { best.pair.1 };
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        apply_swap(&mut levels, &mut dist, n, c, a, b);
        let candidate = score(&dist, n);
        if candidate.better_than(&best) {
            if candidate.min > best.min {
                history.push((candidate.min as f64).sqrt() / scale);
            }
            best = candidate;
        } else {
            apply_swap(&mut levels, &mut dist, n, c, a, b);
        }
    }

    let mut points = DMatrix::zeros(n, p);
    for (c, col) in levels.iter().enumerate() {
        for (r, &k) in col.iter().enumerate() {
            points[(r, c)] = (k as f64 + 0.5) / scale;
        }
    }
    Ok(Design {
        points,
        seed,
        budget,
        min_distance: (best.min as f64).sqrt() / scale,
        history,
    })
}

#[derive(Clone, Copy, Debug)]
struct Score {
    min: i64,
    count: usize,
    pair: (usize, usize),
}

impl Score {
    fn better_than(&self, other: &Score) -> bool {
        self.min > other.min || (self.min == other.min && self.count < other.count)
    }
}

fn score(dist: &[i64], n: usize) -> Score {
    let mut s = Score {
        min: i64::MAX,
        count: 0,
        pair: (0, 1),
    };
    for i in 0..n {
        for j in i + 1..n {
            let d = dist[i * n + j];
            if d < s.min {
                s = Score { min: d, count: 1, pair: (i, j) };
            } else if d == s.min {
                s.count += 1;
            }
        }
    }
    s
}

/// Swaps the levels of rows `a` and `b` in column `c`, updating distances.
fn apply_swap(levels: &mut [Vec<i64>], dist: &mut [i64], n: usize, c: usize, a: usize, b: usize) {
    let col = &mut levels[c];
    let (la, lb) = (col[a], col[b]);
    for k in 0..n {
        if k == a || k == b {
            continue;
        }
        let lk = col[k];
        let delta = (lb - lk).pow(2) - (la - lk).pow(2);
        dist[a * n + k] += delta;
        dist[k * n + a] += delta;
        dist[b * n + k] -= delta;
        dist[k * n + b] -= delta;
    }
    col.swap(a, b);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_min_distance(points: &DMatrix<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..points.nrows() {
            for j in i + 1..points.nrows() {
                let d = (points.row(i) - points.row(j)).norm();
                best = best.min(d);
            }
        }
        best
    }

    fn random_lhs(n: usize, p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, p);
        for c in 0..p {
            let mut col: Vec<usize> = (0..n).collect();
            col.shuffle(rng);
            for (r, k) in col.into_iter().enumerate() {
                m[(r, c)] = (k as f64 + 0.5) / n as f64;
            }
        }
        m
    }

    fn assert_latin(d: &Design) {
        let n = d.n();
        for c in 0..d.p() {
            let mut col: Vec<f64> = d.points.column(c).iter().copied().collect();
            col.sort_by(f64::total_cmp);
            for (k, v) in col.iter().enumerate() {
                assert_eq!(*v, (k as f64 + 0.5) / n as f64);
            }
        }
    }

    #[test]
    fn two_points_one_dimension() {
        let d = maximin_lhs(2, 1, 0, 100).unwrap();
        let mut v: Vec<f64> = d.points.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        assert_eq!(v, vec![0.25, 0.75]);
    }

    #[test]
    fn latin_property_after_optimization() {
        let d = maximin_lhs(30, 3, 17, DEFAULT_BUDGET).unwrap();
        assert_latin(&d);
        assert!(d.min_distance > 0.0);
    }

    #[test]
    fn beats_best_of_random_designs() {
        let d = maximin_lhs(10, 2, 123, DEFAULT_BUDGET).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let best_random = (0..100)
            .map(|_| brute_min_distance(&random_lhs(10, 2, &mut rng)))
            .fold(0.0, f64::max);
        assert!(d.min_distance >= best_random, "{} < {}", d.min_distance, best_random);
        assert!((brute_min_distance(&d.points) - d.min_distance).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_monotone() {
        let a = maximin_lhs(40, 5, 99, 2000).unwrap();
        let b = maximin_lhs(40, 5, 99, 2000).unwrap();
        assert_eq!(a.points, b.points);
        assert!(a.history.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(*a.history.last().unwrap(), a.min_distance);
        let c = maximin_lhs(40, 5, 100, 2000).unwrap();
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn rejects_degenerate_sizes() {
        assert!(maximin_lhs(1, 2, 0, 10).is_err());
        assert!(maximin_lhs(5, 0, 0, 10).is_err());
    }

    #[test]
    fn csv_export() {
        let d = maximin_lhs(3, 2, 4, 50).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 3);
        for (r, line) in rows.iter().enumerate() {
            let vals: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
            assert_eq!(vals.len(), 2);
            assert_eq!(vals[0], d.points[(r, 0)]);
        }
    }
}
