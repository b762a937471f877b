//! Random directions on the unit sphere and projections onto them.

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::measures::{dot, DiscreteMeasure};
use crate::ot1d::Projected1D;
use crate::rng;

/// A unit vector in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction(Vec<f64>);

impl Direction {
    /// Normalizes `coords`; fails on a (numerically) zero vector.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Empty("direction"));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let norm = dot(&coords, &coords).sqrt();
        if norm < 1e-12 {
            return Err(Error::InvalidConfig("direction has zero norm".into()));
        }
        Ok(Self(coords.into_iter().map(|v| v / norm).collect()))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|v| -v).collect())
    }
}

/// Draws the direction with the given index from the stream keyed by `seed`.
///
/// A vector of `d` standard normals (Box-Muller on a ChaCha8 stream selected
/// by `index`) is normalized, which gives the uniform law on `S^{d-1}`.
/// The output depends only on `(seed, index, d)`.
pub fn sample_direction(seed: u64, index: u64, d: usize) -> Direction {
    assert!(d >= 1, "direction dimension must be positive");
    let mut normals = rng::normal_stream(seed, index);
    let mut coords = vec![0.0; d];
    loop {
        coords.iter_mut().for_each(|c| *c = normals.sample());
        if d == 1 {
            if coords[0] != 0.0 {
                return Direction(vec![coords[0].signum()]);
            }
            continue;
        }
        let norm = dot(&coords, &coords).sqrt();
        if norm >= 1e-12 {
            coords.iter_mut().for_each(|c| *c /= norm);
            return Direction(coords);
        }
    }
}

/// The `L` i.i.d. directions used by one Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct ProjectionPlan {
    pub seed: u64,
    pub num_projections: usize,
    pub dim: usize,
}

impl ProjectionPlan {
    pub fn new(seed: u64, num_projections: usize, dim: usize) -> Result<Self> {
        if num_projections == 0 {
            return Err(Error::InvalidConfig("number of projections must be at least 1".into()));
        }
        if dim == 0 {
            return Err(Error::Empty("dimension"));
        }
        Ok(Self { seed, num_projections, dim })
    }

    pub fn direction(&self, index: usize) -> Direction {
        sample_direction(self.seed, index as u64, self.dim)
    }

    pub fn directions(&self) -> impl Iterator<Item = Direction> + '_ {
        (0..self.num_projections).map(|l| self.direction(l))
    }
}

/// Pushes `mu` forward through `x -> theta^T x`.
pub fn project(mu: &DiscreteMeasure, theta: &Direction) -> Result<Projected1D> {
    check_dim(mu.dim(), theta.dim())?;
    Ok(project_unchecked(mu, theta))
}

pub(crate) fn project_unchecked(mu: &DiscreteMeasure, theta: &Direction) -> Projected1D {
    let values = mu.points().map(|x| dot(x, theta.coords())).collect();
    Projected1D::from_parts(values, mu.weights().to_vec())
}

/// `(1/L) sum_l theta_l theta_l^T`, which tends to `I/d`.
///
/// Directions are generated in parallel; the sum runs in ascending `l`.
pub fn mc_second_moment(seed: u64, num_projections: usize, d: usize) -> Result<Vec<Vec<f64>>> {
    let plan = ProjectionPlan::new(seed, num_projections, d)?;
    let directions: Vec<Direction> =
        (0..num_projections).into_par_iter().map(|l| plan.direction(l)).collect();
    let mut acc = vec![vec![0.0; d]; d];
    for theta in &directions {
        let t = theta.coords();
        for (i, row) in acc.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell += t[i] * t[j];
            }
        }
    }
    let scale = 1.0 / num_projections as f64;
    acc.iter_mut().flatten().for_each(|v| *v *= scale);
    Ok(acc)
}

/// Largest entrywise deviation of `m` from `I/d`.
pub fn max_deviation_from_isotropic(m: &[Vec<f64>]) -> f64 {
    let d = m.len() as f64;
    m.iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter().enumerate().map(move |(j, &v)| {
                let target = if i == j { 1.0 / d } else { 0.0 };
                (v - target).abs()
            })
        })
        .fold(0.0, f64::max)
}
