//! Permutation two-sample tests with a sliced Wasserstein statistic.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::estimators::{estimate, Estimator};
use crate::measures::DiscreteMeasure;
use crate::rng::{stream, substream_seed};
use crate::slicing::ProjectionPlan;

pub const MIN_PERMUTATIONS: usize = 19;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    /// Estimate of `SW_p^p` between the two samples as given.
    pub statistic: f64,
    /// `(1 + #{permuted >= observed}) / (permutations + 1)`.
    pub p_value: f64,
    pub permutations: usize,
    pub estimator: Estimator,
    pub num_projections: usize,
    pub p: f64,
    pub seed: u64,
}

/// Add-one permutation p-value.
pub fn permutation_p_value(observed: f64, permuted: &[f64]) -> f64 {
    let exceed = permuted.iter().filter(|&&s| s >= observed).count();
    (1 + exceed) as f64 / (permuted.len() + 1) as f64
}

/// Tests whether `a` and `b` (rows of `d` coordinates, uniform weights) come
/// from the same distribution.
///
/// Every statistic, observed or permuted, uses the same directions (seeded by
/// `seed`). Permutation `k` shuffles the pooled rows with its own stream.
#[allow(clippy::too_many_arguments)]
pub fn permutation_test(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    estimator: Estimator,
    p: f64,
    num_projections: usize,
    permutations: usize,
    seed: u64,
) -> Result<TestResult> {
    check_dim(a.dim(), b.dim())?;
    if permutations < MIN_PERMUTATIONS {
        return Err(Error::InvalidConfig(format!(
            "at least {MIN_PERMUTATIONS} permutations are required, got {permutations}"
        )));
    }
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidConfig("each sample needs at least two points".into()));
    }
    let d = a.dim();
    let (n, m) = (a.len(), b.len());
    let plan = ProjectionPlan::new(seed, num_projections, d)?;
    let statistic = |x: &DiscreteMeasure, y: &DiscreteMeasure| -> Result<f64> {
        Ok(estimate(x, y, p, &plan, estimator)?.value)
    };
    let observed = statistic(a, b)?;

    let pooled: Vec<&[f64]> = a.points().chain(b.points()).collect();
    let shuffle_seed = substream_seed(seed, 0);
    let permuted = (0..permutations)
        .into_par_iter()
        .map(|k| {
            let mut order: Vec<usize> = (0..n + m).collect();
            order.shuffle(&mut stream(shuffle_seed, k as u64));
            let take = |idx: &[usize]| -> Result<DiscreteMeasure> {
                DiscreteMeasure::uniform(idx.iter().flat_map(|&i| pooled[i].iter().copied()).collect(), d)
            };
            statistic(&take(&order[..n])?, &take(&order[n..])?)
        })
        .collect::<Result<Vec<f64>>>()?;

    Ok(TestResult {
        statistic: observed,
        p_value: permutation_p_value(observed, &permuted),
        permutations,
        estimator,
        num_projections,
        p,
        seed,
    })
}
