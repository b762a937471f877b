//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the transport code under test: quantile functions
//! are evaluated on a dense grid, assignments are enumerated, derivatives are
//! taken by central differences.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Positive integers summing to `total`, as weights `k / total`.
pub fn grid_weights(rng: &mut ChaCha8Rng, n: usize, total: usize) -> Vec<f64> {
    assert!(n >= 1 && n <= total);
    let mut cuts = std::collections::BTreeSet::new();
    while cuts.len() < n - 1 {
        cuts.insert(rng.random_range(1..total));
    }
    let mut prev = 0;
    let mut out = Vec::with_capacity(n);
    for c in cuts.into_iter().chain(std::iter::once(total)) {
        out.push((c - prev) as f64 / total as f64);
        prev = c;
    }
    out
}

pub fn uniform_values(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Left-continuous quantile function of a weighted point set, queried at
/// increasing levels.
struct QuantileCursor {
    values: Vec<f64>,
    cumulative: Vec<f64>,
    pos: usize,
}

impl QuantileCursor {
    fn new(values: &[f64], weights: &[f64]) -> Self {
        let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        let cumulative = pairs
            .iter()
            .map(|p| {
                acc += p.1;
                acc
            })
            .collect();
        Self { values: pairs.iter().map(|p| p.0).collect(), cumulative, pos: 0 }
    }

    fn at(&mut self, u: f64) -> f64 {
        while self.pos + 1 < self.values.len() && self.cumulative[self.pos] < u {
            self.pos += 1;
        }
        self.values[self.pos]
    }
}

/// `int_0^1 |F^-1(u) - G^-1(u)|^p du` by the midpoint rule on `grid` cells.
///
/// Exact (up to rounding) when every cumulative weight is a multiple of
/// `1 / grid`, since both quantile functions are then constant on each cell.
pub fn quantile_grid_cost(va: &[f64], wa: &[f64], vb: &[f64], wb: &[f64], p: f64, grid: usize) -> f64 {
    let mut qa = QuantileCursor::new(va, wa);
    let mut qb = QuantileCursor::new(vb, wb);
    let mut sum = 0.0;
    for j in 0..grid {
        let u = (j as f64 + 0.5) / grid as f64;
        sum += (qa.at(u) - qb.at(u)).abs().powf(p);
    }
    sum / grid as f64
}

/// `min_sigma (1/n) sum_i |x_i - y_sigma(i)|^2` over all permutations
/// (Heap's algorithm). Rows of `d` coordinates.
pub fn brute_force_w2(x: &[f64], y: &[f64], d: usize) -> f64 {
    let n = x.len() / d;
    let cost = |i: usize, j: usize| -> f64 {
        (0..d).map(|k| (x[i * d + k] - y[j * d + k]).powi(2)).sum()
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let total = |perm: &[usize]| -> f64 { perm.iter().enumerate().map(|(i, &j)| cost(i, j)).sum() };
    let mut best = total(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(total(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best / n as f64
}

/// Central-difference gradient of `f` at `x`.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            probe[j] = x[j] + h;
            let up = f(&probe);
            probe[j] = x[j] - h;
            let down = f(&probe);
            probe[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / |b|` in the Euclidean norm (absolute when `b` is zero).
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if norm > 0.0 {
        diff / norm
    } else {
        diff
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// `SW_p^p` in the plane by the trapezoid rule over `m` equally spaced angles
/// of the half circle (`W(theta) = W(-theta)`).
pub fn sw_circle_quadrature(x: &[f64], y: &[f64], p: f64, m: usize) -> f64 {
    let nx = x.len() / 2;
    let ny = y.len() / 2;
    let wx = vec![1.0 / nx as f64; nx];
    let wy = vec![1.0 / ny as f64; ny];
    let grid = nx * ny;
    let mut sum = 0.0;
    for k in 0..m {
        let t = std::f64::consts::PI * k as f64 / m as f64;
        let (s, c) = t.sin_cos();
        let px: Vec<f64> = (0..nx).map(|i| c * x[2 * i] + s * x[2 * i + 1]).collect();
        let py: Vec<f64> = (0..ny).map(|i| c * y[2 * i] + s * y[2 * i + 1]).collect();
        sum += quantile_grid_cost(&px, &wx, &py, &wy, p, grid);
    }
    sum / m as f64
}
