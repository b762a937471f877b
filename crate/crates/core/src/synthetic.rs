//! Seeded synthetic point clouds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::rng::{normal_stream, substream_seed};

/// A Gaussian cloud `mean + R diag(scales) z` with `z` standard normal and
/// `R` a random rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianCloud {
    pub n: usize,
    pub dim: usize,
    /// Every coordinate of the mean.
    pub shift: f64,
    /// Standard deviations along the principal axes; geometric from 1 to
    /// `max_scale`.
    pub max_scale: f64,
    /// Rotate the principal axes away from the coordinate axes.
    pub rotate: bool,
}

impl GaussianCloud {
    pub fn isotropic(n: usize, dim: usize, shift: f64) -> Self {
        Self { n, dim, shift, max_scale: 1.0, rotate: false }
    }

    pub fn anisotropic(n: usize, dim: usize, shift: f64, max_scale: f64) -> Self {
        Self { n, dim, shift, max_scale, rotate: true }
    }

    pub fn scales(&self) -> Vec<f64> {
        if self.dim == 1 {
            return vec![self.max_scale];
        }
        (0..self.dim).map(|k| self.max_scale.powf(k as f64 / (self.dim - 1) as f64)).collect()
    }

    pub fn sample(&self, seed: u64) -> Result<DiscreteMeasure> {
        if self.n == 0 || self.dim == 0 {
            return Err(Error::Empty("synthetic cloud"));
        }
        if !(self.max_scale > 0.0 && self.max_scale.is_finite() && self.shift.is_finite()) {
            return Err(Error::InvalidConfig("scales must be positive and finite".into()));
        }
        let d = self.dim;
        let scales = self.scales();
        let rotation = if self.rotate { Some(random_rotation(substream_seed(seed, 1), d)) } else { None };
        let mut z = normal_stream(seed, 0);
        let mut out = Vec::with_capacity(self.n * d);
        let mut row = vec![0.0; d];
        for _ in 0..self.n {
            row.iter_mut().zip(&scales).for_each(|(r, s)| *r = z.sample() * s);
            match &rotation {
                Some(q) => {
                    for i in 0..d {
                        let v: f64 = (0..d).map(|k| q[i * d + k] * row[k]).sum();
                        out.push(v + self.shift);
                    }
                }
                None => out.extend(row.iter().map(|v| v + self.shift)),
            }
        }
        DiscreteMeasure::uniform(out, d)
    }
}

/// Row-major orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
fn random_rotation(seed: u64, d: usize) -> Vec<f64> {
    let mut z = normal_stream(seed, 0);
    let mut q: Vec<f64> = Vec::with_capacity(d * d);
    while q.len() < d * d {
        let mut v: Vec<f64> = (0..d).map(|_| z.sample()).collect();
        for row in q.chunks_exact(d) {
            let proj: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(row).for_each(|(x, r)| *x -= proj * r);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            q.extend(v.iter().map(|x| x / norm));
        }
    }
    q
}
