//! Closed-form Wasserstein distances on the line and between Gaussians.

use crate::error::{check_dim, Error, Result};

/// A one-dimensional discrete measure, typically the projection of a
/// [`DiscreteMeasure`](crate::DiscreteMeasure) onto a direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected1D {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl Projected1D {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("projected measure"));
        }
        check_dim(values.len(), weights.len())?;
        if values.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        if let Some(i) = weights.iter().position(|&w| w < 0.0) {
            return Err(Error::NegativeWeight(i));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Format(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { values, weights })
    }

    /// Uniform weights over `values`.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(values, vec![1.0 / n as f64; n])
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_parts(values: Vec<f64>, weights: Vec<f64>) -> Self {
        Self { values, weights }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn sorted_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&i, &j| self.values[i].total_cmp(&self.values[j]));
        idx
    }
}

/// One piece of the monotone (quantile) coupling: on a `mass`-long stretch of
/// `[0, 1]` both quantile functions are constant, equal to support `a` of the
/// first measure and support `b` of the second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingSegment {
    pub mass: f64,
    pub a: usize,
    pub b: usize,
}

/// Merges the cumulative-weight breakpoints of both measures.
///
/// Indices in the returned segments refer to the original (unsorted) order.
/// Cumulative sums are clamped to `[0, 1]` and the last breakpoint of each
/// measure is pinned to exactly 1.
pub fn monotone_coupling(a: &Projected1D, b: &Projected1D) -> Vec<CouplingSegment> {
    let ia = a.sorted_order();
    let ib = b.sorted_order();
    let (n, m) = (ia.len(), ib.len());
    let mut segments = Vec::with_capacity(n + m);
    let (mut i, mut j) = (0usize, 0usize);
    let mut ca = a.weights[ia[0]];
    let mut cb = b.weights[ib[0]];
    let mut prev = 0.0f64;
    loop {
        let last_a = i + 1 == n;
        let last_b = j + 1 == m;
        let qa = if last_a { 1.0 } else { ca.clamp(0.0, 1.0) };
        let qb = if last_b { 1.0 } else { cb.clamp(0.0, 1.0) };
        let next = qa.min(qb);
        if next > prev {
            segments.push(CouplingSegment { mass: next - prev, a: ia[i], b: ib[j] });
            prev = next;
        }
        if last_a && last_b {
            break;
        }
        let advance_a = !last_a && qa <= qb;
        let advance_b = !last_b && qb <= qa;
        if advance_a {
            i += 1;
            ca += a.weights[ia[i]];
        }
        if advance_b {
            j += 1;
            cb += b.weights[ib[j]];
        }
    }
    segments
}

#[inline]
pub(crate) fn abs_pow(x: f64, p: f64) -> f64 {
    let x = x.abs();
    if p == 1.0 {
        x
    } else if p == 2.0 {
        x * x
    } else {
        x.powf(p)
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidP(p))
    }
}

/// `W_p^p(a, b) = int_0^1 |F_a^{-1}(z) - F_b^{-1}(z)|^p dz`, computed exactly.
///
/// Returns the p-th power, not the root.
pub fn w1d(a: &Projected1D, b: &Projected1D, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(w1d_unchecked(a, b, p))
}

pub(crate) fn w1d_unchecked(a: &Projected1D, b: &Projected1D, p: f64) -> f64 {
    monotone_coupling(a, b)
        .iter()
        .map(|s| s.mass * abs_pow(a.values[s.a] - b.values[s.b], p))
        .sum()
}

/// A univariate Gaussian `N(mean, variance)`. Zero variance is a Dirac mass.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GaussianFit1D {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianFit1D {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !variance.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        if variance < 0.0 {
            return Err(Error::InvalidConfig(format!("negative variance {variance}")));
        }
        Ok(Self { mean, variance })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// `W_2^2` between two univariate Gaussians: `(m1 - m2)^2 + (s1 - s2)^2`.
pub fn w2_gauss_1d(g1: &GaussianFit1D, g2: &GaussianFit1D) -> f64 {
    let dm = g1.mean - g2.mean;
    let ds = g1.std_dev() - g2.std_dev();
    dm * dm + ds * ds
}

/// `W_2^2` between `N(m1, v1 I)` and `N(m2, v2 I)` in `R^d`:
/// `|m1 - m2|^2 + d (sqrt(v1) - sqrt(v2))^2`.
pub fn w2_gauss_isotropic(m1: &[f64], v1: f64, m2: &[f64], v2: f64) -> Result<f64> {
    check_dim(m1.len(), m2.len())?;
    let mean_term: f64 = m1.iter().zip(m2).map(|(a, b)| (a - b) * (a - b)).sum();
    let ds = v1.sqrt() - v2.sqrt();
    Ok(mean_term + m1.len() as f64 * ds * ds)
}
