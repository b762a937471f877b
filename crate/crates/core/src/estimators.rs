//! Monte Carlo estimators of `SW_p^p`: the plain average over random
//! directions and the two control-variate versions.
//!
//! All estimators of one call share the same direction stream, so `w_l` and
//! `c_l` are evaluated on the same `theta_l`. Per-direction work runs in
//! parallel; every reduction over `l` runs sequentially in ascending order so
//! the result is bit-identical for any thread count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::gauss_cv::{CvContext, CvKind};
use crate::measures::DiscreteMeasure;
use crate::ot1d::{check_p, w1d_unchecked};
use crate::rng::substream_seed;
use crate::slicing::{project_unchecked, ProjectionPlan};

/// Relative size below which the control variate's spread is treated as zero
/// and the coefficient falls back to 0.
const GAMMA_DENOM_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Plain Monte Carlo average.
    Sw,
    /// Lower-bound control variate.
    Lcv,
    /// Upper-bound control variate.
    Ucv,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Sw, Estimator::Lcv, Estimator::Ucv];

    pub fn control_variate(self) -> Option<CvKind> {
        match self {
            Estimator::Sw => None,
            Estimator::Lcv => Some(CvKind::Lower),
            Estimator::Ucv => Some(CvKind::Upper),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Sw => "sw",
            Estimator::Lcv => "lcv",
            Estimator::Ucv => "ucv",
        })
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sw" => Ok(Estimator::Sw),
            "lcv" | "lcv-sw" => Ok(Estimator::Lcv),
            "ucv" | "ucv-sw" => Ok(Estimator::Ucv),
            other => Err(format!("unknown estimator `{other}` (expected sw, lcv or ucv)")),
        }
    }
}

/// Result of one estimate, with in-sample diagnostics.
///
/// All variances use `1/L` normalization. `sample_var_c` and
/// `sample_cov_wc` center the control variate at its exact expectation `B`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimator: Estimator,
    /// Estimate of `SW_p^p`; may be slightly negative for the control-variate
    /// estimators.
    pub value: f64,
    pub gamma_hat: f64,
    pub sample_var_w: f64,
    pub sample_var_c: f64,
    pub sample_cov_wc: f64,
    pub sample_var_z: f64,
    pub control_mean: f64,
    pub control_expectation: f64,
    pub num_projections: usize,
    pub p: f64,
    pub seed: u64,
    pub clamped: bool,
}

impl EstimateReport {
    /// `max(value, 0)^(1/p)`; records whether the clamp was needed.
    pub fn to_distance(&mut self) -> f64 {
        self.clamped = self.value < 0.0;
        self.value.max(0.0).powf(1.0 / self.p)
    }

    /// Plug-in bound on the expected absolute error: `sqrt(Var[Z] / L)`.
    /// For the plain estimator `Z = W`.
    pub fn error_bound(&self) -> f64 {
        (self.sample_var_z / self.num_projections as f64).sqrt()
    }
}

/// Control-variate combination of per-direction samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlledMoments {
    pub value: f64,
    pub gamma: f64,
    pub mean_w: f64,
    pub mean_c: f64,
    pub var_w: f64,
    pub var_c: f64,
    pub cov_wc: f64,
    pub var_z: f64,
}

/// Estimated optimal coefficient
/// `[(1/L) sum (w_l - wbar)(c_l - B)] / [(1/L) sum (c_l - B)^2]`.
///
/// Both sums center the control at its exact mean `B`, not at the sample mean
/// of `c`. Returns 0 when the denominator is negligible.
pub fn estimate_gamma(w: &[f64], c: &[f64], b: f64) -> f64 {
    combine(w, c, b).gamma
}

/// Computes the control-variate estimate and its diagnostics from the paired
/// samples `w_l`, `c_l` and the exact expectation `b` of the control.
pub fn combine(w: &[f64], c: &[f64], b: f64) -> ControlledMoments {
    assert_eq!(w.len(), c.len(), "sample arrays must have equal length");
    assert!(!w.is_empty(), "at least one sample is required");
    let inv_l = 1.0 / w.len() as f64;
    let mean_w = w.iter().sum::<f64>() * inv_l;
    let mean_c = c.iter().sum::<f64>() * inv_l;
    let var_w = w.iter().map(|x| (x - mean_w) * (x - mean_w)).sum::<f64>() * inv_l;
    let cov_wc = w.iter().zip(c).map(|(x, y)| (x - mean_w) * (y - b)).sum::<f64>() * inv_l;
    let var_c = c.iter().map(|y| (y - b) * (y - b)).sum::<f64>() * inv_l;
    let scale = b * b + c.iter().map(|y| y * y).sum::<f64>() * inv_l;
    let gamma = if var_c <= GAMMA_DENOM_REL_TOL * scale { 0.0 } else { cov_wc / var_c };
    let value = mean_w - gamma * (mean_c - b);
    let var_z = if gamma == 0.0 {
        var_w
    } else {
        let z: Vec<f64> = w.iter().zip(c).map(|(x, y)| x - gamma * (y - b)).collect();
        let mean_z = z.iter().sum::<f64>() * inv_l;
        z.iter().map(|v| (v - mean_z) * (v - mean_z)).sum::<f64>() * inv_l
    };
    ControlledMoments { value, gamma, mean_w, mean_c, var_w, var_c, cov_wc, var_z }
}

fn validate(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64, plan: &ProjectionPlan) -> Result<()> {
    check_dim(mu.dim(), nu.dim())?;
    check_dim(mu.dim(), plan.dim)?;
    check_p(p)?;
    if plan.num_projections == 0 {
        return Err(Error::InvalidConfig("number of projections must be at least 1".into()));
    }
    Ok(())
}

/// Projected costs `w_l = W_p^p(theta_l # mu, theta_l # nu)` for every
/// direction of `plan`, in index order.
pub fn projected_costs(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64, plan: &ProjectionPlan) -> Result<Vec<f64>> {
    validate(mu, nu, p, plan)?;
    Ok(samples(mu, nu, p, plan, None).into_iter().map(|(w, _)| w).collect())
}

fn samples(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
    plan: &ProjectionPlan,
    ctx: Option<&CvContext>,
) -> Vec<(f64, f64)> {
    (0..plan.num_projections)
        .into_par_iter()
        .map(|l| {
            let theta = plan.direction(l);
            let pm = project_unchecked(mu, &theta);
            let pn = project_unchecked(nu, &theta);
            let w = w1d_unchecked(&pm, &pn, p);
            let c = ctx.map_or(0.0, |ctx| ctx.control(&theta, &pm, &pn));
            (w, c)
        })
        .collect()
}

/// Plain Monte Carlo estimate `(1/L) sum_l W_p^p(theta_l # mu, theta_l # nu)`.
pub fn sw_mc(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64, plan: &ProjectionPlan) -> Result<EstimateReport> {
    validate(mu, nu, p, plan)?;
    let w: Vec<f64> = samples(mu, nu, p, plan, None).into_iter().map(|(w, _)| w).collect();
    let inv_l = 1.0 / w.len() as f64;
    let mean = w.iter().sum::<f64>() * inv_l;
    let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() * inv_l;
    Ok(EstimateReport {
        estimator: Estimator::Sw,
        value: mean,
        gamma_hat: 0.0,
        sample_var_w: var,
        sample_var_c: 0.0,
        sample_cov_wc: 0.0,
        sample_var_z: var,
        control_mean: 0.0,
        control_expectation: 0.0,
        num_projections: plan.num_projections,
        p,
        seed: plan.seed,
        clamped: false,
    })
}

/// Control-variate estimate `wbar - gamma_hat (cbar - B)`.
pub fn cv_sw(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
    plan: &ProjectionPlan,
    kind: CvKind,
) -> Result<EstimateReport> {
    validate(mu, nu, p, plan)?;
    let ctx = CvContext::new(kind, mu, nu)?;
    let (w, c): (Vec<f64>, Vec<f64>) = samples(mu, nu, p, plan, Some(&ctx)).into_iter().unzip();
    let m = combine(&w, &c, ctx.expectation());
    Ok(EstimateReport {
        estimator: match kind {
            CvKind::Lower => Estimator::Lcv,
            CvKind::Upper => Estimator::Ucv,
        },
        value: m.value,
        gamma_hat: m.gamma,
        sample_var_w: m.var_w,
        sample_var_c: m.var_c,
        sample_cov_wc: m.cov_wc,
        sample_var_z: m.var_z,
        control_mean: m.mean_c,
        control_expectation: ctx.expectation(),
        num_projections: plan.num_projections,
        p,
        seed: plan.seed,
        clamped: false,
    })
}

/// Dispatches to [`sw_mc`] or [`cv_sw`].
pub fn estimate(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
    plan: &ProjectionPlan,
    estimator: Estimator,
) -> Result<EstimateReport> {
    match estimator.control_variate() {
        None => sw_mc(mu, nu, p, plan),
        Some(kind) => cv_sw(mu, nu, p, plan, kind),
    }
}

/// Spread of an estimator across independent replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateSummary {
    pub estimator: Estimator,
    pub num_projections: usize,
    pub reps: usize,
    pub mean: f64,
    /// Unbiased (`1/(reps-1)`) variance of the replicate estimates.
    pub variance: f64,
    /// Mean of `|estimate - reference|`, when a reference was supplied.
    pub mean_abs_error: Option<f64>,
    #[serde(skip)]
    pub estimates: Vec<f64>,
}

/// Runs `reps` independent estimates; replicate `r` draws its directions from
/// the child seed `substream_seed(seed, r)`.
#[allow(clippy::too_many_arguments)]
pub fn replicate_variance(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
    estimator: Estimator,
    num_projections: usize,
    reps: usize,
    seed: u64,
    reference: Option<f64>,
) -> Result<ReplicateSummary> {
    if reps < 2 {
        return Err(Error::InvalidConfig("at least two replicates are required".into()));
    }
    let estimates = (0..reps)
        .into_par_iter()
        .map(|r| {
            let plan = ProjectionPlan::new(substream_seed(seed, r as u64), num_projections, mu.dim())?;
            Ok(estimate(mu, nu, p, &plan, estimator)?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = estimates.iter().sum::<f64>() / reps as f64;
    let variance = estimates.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (reps - 1) as f64;
    let mean_abs_error =
        reference.map(|r| estimates.iter().map(|v| (v - r).abs()).sum::<f64>() / reps as f64);
    Ok(ReplicateSummary { estimator, num_projections, reps, mean, variance, mean_abs_error, estimates })
}
