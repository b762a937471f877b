//! Sliced Wasserstein gradient flows between point clouds.
//!
//! A source cloud `X` of `n` points is moved by explicit Euler steps on
//! `dX/dt = -n grad_X SW_2(mu_X, nu)`, with `SW_2` replaced by one of the
//! estimators and fresh directions drawn at every step. The coefficient
//! `gamma_hat` of the control-variate estimators is treated as a constant when
//! differentiating; the exact expectation `B` is differentiated analytically.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::assignment;
use crate::error::{check_dim, Error, Result};
use crate::estimators::{combine, Estimator};
use crate::gauss_cv::{CvContext, CvKind};
use crate::measures::{dot, squared_distance, DiscreteMeasure};
use crate::ot1d::{monotone_coupling, w1d_unchecked, Projected1D};
use crate::rng::substream_seed;
use crate::slicing::{project_unchecked, Direction, ProjectionPlan};

/// Values of the estimate at or below this are treated as zero distance; the
/// root's gradient is singular there.
pub const ROOT_CLAMP: f64 = 1e-12;

/// Largest cloud accepted by [`exact_w2`].
pub const EXACT_W2_MAX_POINTS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowConfig {
    /// Order of the sliced distance; only `p = 2` is supported.
    pub p: f64,
    pub num_projections: usize,
    pub step_size: f64,
    pub iterations: usize,
    pub estimator: Estimator,
    pub seed: u64,
    pub eval_every: usize,
}

impl FlowConfig {
    pub fn new(estimator: Estimator, num_projections: usize, step_size: f64, iterations: usize, seed: u64) -> Self {
        Self { p: 2.0, num_projections, step_size, iterations, estimator, seed, eval_every: 100 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p != 2.0 {
            return Err(Error::InvalidConfig(format!("flows support p = 2 only, got {}", self.p)));
        }
        if self.num_projections == 0 {
            return Err(Error::InvalidConfig("number of projections must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidConfig(format!("step size must be positive, got {}", self.step_size)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("eval_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Directions used at step `step`.
    pub fn plan_for_step(&self, step: usize, dim: usize) -> Result<ProjectionPlan> {
        ProjectionPlan::new(substream_seed(self.seed, step as u64), self.num_projections, dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub step: usize,
    pub w2_squared: f64,
    /// Cumulative time spent in gradient evaluation and updates.
    pub wall_seconds: f64,
}

/// The moving cloud and its evaluation history.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub points: Vec<f64>,
    pub dim: usize,
    pub step: usize,
    pub trace: Vec<TracePoint>,
}

/// Gradient of an estimator of `SW_2` with respect to the source supports.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGradient {
    /// Row-major `n x d`.
    pub grad: Vec<f64>,
    /// The estimate of `SW_2^2` at the current cloud.
    pub value: f64,
    pub gamma: f64,
    /// Set when the estimate is at most [`ROOT_CLAMP`]; the gradient is then zero.
    pub degenerate: bool,
}

/// Gradient of `W_2^2(a, b)` with respect to the supports of the measure `a`
/// was projected from: each coupling segment adds
/// `mass * 2 (a_i - b_j) * theta` to support `i`.
pub fn grad_w1d_p2(a: &Projected1D, b: &Projected1D, theta: &Direction) -> Result<Vec<f64>> {
    let d = theta.dim();
    let scalar = w2_grad_scalar(a, b);
    let mut grad = vec![0.0; a.len() * d];
    for (g, s) in grad.chunks_exact_mut(d).zip(&scalar) {
        for (gk, t) in g.iter_mut().zip(theta.coords()) {
            *gk = s * t;
        }
    }
    Ok(grad)
}

/// Derivative of `W_2^2(a, b)` with respect to each value of `a`.
fn w2_grad_scalar(a: &Projected1D, b: &Projected1D) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for s in monotone_coupling(a, b) {
        out[s.a] += s.mass * 2.0 * (a.values()[s.a] - b.values()[s.b]);
    }
    out
}

struct SliceTerms {
    theta: Direction,
    w: f64,
    c: f64,
    /// d w / d (theta^T x_i)
    dw: Vec<f64>,
    /// d c / d (theta^T x_i)
    dc: Vec<f64>,
}

/// Gradient of the chosen estimator of `SW_2` (the root) at the cloud `x`,
/// using the directions of `plan`.
pub fn grad_estimator(
    x: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    estimator: Estimator,
    plan: &ProjectionPlan,
) -> Result<FlowGradient> {
    check_dim(x.dim(), nu.dim())?;
    check_dim(x.dim(), plan.dim)?;
    let d = x.dim();
    let n = x.len();
    let ctx = match estimator.control_variate() {
        Some(kind) => Some(CvContext::new(kind, x, nu)?),
        None => None,
    };

    let terms: Vec<SliceTerms> = (0..plan.num_projections)
        .into_par_iter()
        .map(|l| {
            let theta = plan.direction(l);
            let px = project_unchecked(x, &theta);
            let py = project_unchecked(nu, &theta);
            let w = w1d_unchecked(&px, &py, 2.0);
            let dw = w2_grad_scalar(&px, &py);
            let (c, dc) = match &ctx {
                None => (0.0, Vec::new()),
                Some(ctx) => {
                    let c = ctx.control(&theta, &px, &py);
                    let gap = ctx.projected_mean_gap(&theta);
                    let center = dot(theta.coords(), ctx.mean_mu());
                    let dc = px
                        .values()
                        .iter()
                        .zip(px.weights())
                        .map(|(&v, &a)| {
                            let mut g = 2.0 * gap * a;
                            if ctx.kind() == CvKind::Upper {
                                g += 2.0 * a * (v - center);
                            }
                            g
                        })
                        .collect();
                    (c, dc)
                }
            };
            SliceTerms { theta, w, c, dw, dc }
        })
        .collect();

    let inv_l = 1.0 / plan.num_projections as f64;
    let w: Vec<f64> = terms.iter().map(|t| t.w).collect();
    let (value, gamma) = match &ctx {
        None => (w.iter().sum::<f64>() * inv_l, 0.0),
        Some(ctx) => {
            let c: Vec<f64> = terms.iter().map(|t| t.c).collect();
            let m = combine(&w, &c, ctx.expectation());
            (m.value, m.gamma)
        }
    };

    if value <= ROOT_CLAMP {
        return Ok(FlowGradient { grad: vec![0.0; n * d], value, gamma, degenerate: true });
    }

    // grad of value = mean_l [dw_l - gamma dc_l] theta_l + gamma grad B
    let mut grad = vec![0.0; n * d];
    for t in &terms {
        let th = t.theta.coords();
        for i in 0..n {
            let mut s = t.dw[i];
            if gamma != 0.0 {
                s -= gamma * t.dc[i];
            }
            let row = &mut grad[i * d..(i + 1) * d];
            for (g, tk) in row.iter_mut().zip(th) {
                *g += s * tk;
            }
        }
    }
    grad.iter_mut().for_each(|g| *g *= inv_l);

    if let (Some(ctx), true) = (&ctx, gamma != 0.0) {
        let scale = 2.0 / d as f64;
        let gap: Vec<f64> = ctx.mean_mu().iter().zip(ctx.mean_nu()).map(|(a, b)| a - b).collect();
        for (i, (xi, &a)) in x.points().zip(x.weights()).enumerate() {
            let row = &mut grad[i * d..(i + 1) * d];
            for k in 0..d {
                let mut db = scale * a * gap[k];
                if ctx.kind() == CvKind::Upper {
                    db += scale * a * (xi[k] - ctx.mean_mu()[k]);
                }
                row[k] += gamma * db;
            }
        }
    }

    // chain rule through the square root
    let factor = 0.5 * value.powf(-0.5);
    grad.iter_mut().for_each(|g| *g *= factor);
    Ok(FlowGradient { grad, value, gamma, degenerate: false })
}

/// Exact `W_2^2` between two uniform clouds of equal size, via an optimal
/// assignment on squared Euclidean costs. Weights are ignored.
pub fn exact_w2(x: &DiscreteMeasure, y: &DiscreteMeasure) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::SizeMismatch(x.len(), y.len()));
    }
    check_dim(x.dim(), y.dim())?;
    let n = x.len();
    if n > EXACT_W2_MAX_POINTS {
        return Err(Error::TooLarge { size: n, limit: EXACT_W2_MAX_POINTS });
    }
    let mut costs = Vec::with_capacity(n * n);
    for xi in x.points() {
        for yj in y.points() {
            costs.push(squared_distance(xi, yj));
        }
    }
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let (col_of_row, _) = assignment::solve(&costs, n);
    // summing the matched costs in sorted order makes the result independent
    // of which cloud indexes the rows, so exact_w2(x, y) == exact_w2(y, x)
    let mut matched: Vec<f64> = col_of_row.iter().enumerate().map(|(i, &j)| costs[i * n + j]).collect();
    matched.sort_by(f64::total_cmp);
    Ok(matched.iter().sum::<f64>() / n as f64)
}

/// Integrates the flow from `x0` towards `nu`.
///
/// The trace records exact `W_2^2` at step 0, every `eval_every` steps and at
/// the final step.
pub fn run_flow(x0: &DiscreteMeasure, nu: &DiscreteMeasure, config: &FlowConfig) -> Result<FlowState> {
    config.validate()?;
    check_dim(x0.dim(), nu.dim())?;
    let d = x0.dim();
    let n = x0.len();
    let mut points = x0.supports().to_vec();
    let mut trace = Vec::new();
    let mut kernel_seconds = 0.0;
    let evaluate = |points: &[f64]| -> Result<f64> { exact_w2(&DiscreteMeasure::uniform(points.to_vec(), d)?, nu) };
    trace.push(TracePoint { step: 0, w2_squared: evaluate(&points)?, wall_seconds: 0.0 });

    for step in 0..config.iterations {
        let started = Instant::now();
        let cloud = DiscreteMeasure::uniform(points.clone(), d)?;
        let plan = config.plan_for_step(step, d)?;
        let g = grad_estimator(&cloud, nu, config.estimator, &plan)?;
        let rate = config.step_size * n as f64;
        for (xk, gk) in points.iter_mut().zip(&g.grad) {
            *xk -= rate * gk;
        }
        kernel_seconds += started.elapsed().as_secs_f64();
        let done = step + 1;
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: done, trace });
        }
        if done % config.eval_every == 0 || done == config.iterations {
            trace.push(TracePoint { step: done, w2_squared: evaluate(&points)?, wall_seconds: kernel_seconds });
        }
    }
    Ok(FlowState { points, dim: d, step: config.iterations, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slicing::{project, sample_direction};

    fn cloud(seed: u64, n: usize, d: usize, shift: f64, scale: f64) -> DiscreteMeasure {
        let mut z = crate::rng::normal_stream(seed, 0);
        DiscreteMeasure::uniform((0..n * d).map(|_| z.sample() * scale + shift).collect(), d).unwrap()
    }

    #[test]
    fn w2_gradient_single_pair() {
        let x = DiscreteMeasure::from_points(&[[0.0, 0.0]], None).unwrap();
        let y = DiscreteMeasure::from_points(&[[1.0, 0.0]], None).unwrap();
        let theta = Direction::new(vec![1.0, 0.0]).unwrap();
        let g = grad_w1d_p2(&project(&x, &theta).unwrap(), &project(&y, &theta).unwrap(), &theta).unwrap();
        assert_eq!(g, vec![-2.0, 0.0]);
    }

    #[test]
    fn w2_gradient_vanishes_on_same_cloud() {
        let x = cloud(1, 6, 3, 0.0, 1.0);
        let theta = sample_direction(0, 0, 3);
        let p = project(&x, &theta).unwrap();
        assert!(grad_w1d_p2(&p, &p, &theta).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn estimator_gradient_zero_at_target() {
        let y = cloud(2, 8, 2, 0.0, 1.0);
        for est in Estimator::ALL {
            let g = grad_estimator(&y, &y, est, &ProjectionPlan::new(4, 10, 2).unwrap()).unwrap();
            assert!(g.degenerate);
            assert!(g.grad.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn one_dimensional_gradient_is_exact() {
        let x = cloud(3, 5, 1, 0.0, 1.0);
        let y = cloud(4, 5, 1, 2.0, 0.5);
        let g = grad_estimator(&x, &y, Estimator::Sw, &ProjectionPlan::new(0, 7, 1).unwrap()).unwrap();
        let e = Direction::new(vec![1.0]).unwrap();
        let (px, py) = (project(&x, &e).unwrap(), project(&y, &e).unwrap());
        let w = crate::ot1d::w1d(&px, &py, 2.0).unwrap();
        let exact: Vec<f64> = grad_w1d_p2(&px, &py, &e).unwrap().iter().map(|g| 0.5 / w.sqrt() * g).collect();
        for (a, b) in g.grad.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn exact_w2_examples() {
        let x = DiscreteMeasure::from_points(&[[0.0, 0.0], [1.0, 0.0]], None).unwrap();
        let y = DiscreteMeasure::from_points(&[[0.0, 1.0], [1.0, 1.0]], None).unwrap();
        assert!((exact_w2(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let a = cloud(5, 7, 3, 0.0, 1.0);
        let perm: Vec<f64> = [3, 0, 6, 1, 5, 2, 4].iter().flat_map(|&i| a.point(i).to_vec()).collect();
        let b = DiscreteMeasure::uniform(perm, 3).unwrap();
        assert!(exact_w2(&a, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn exact_w2_guards() {
        let a = cloud(1, 3, 2, 0.0, 1.0);
        let b = cloud(1, 4, 2, 0.0, 1.0);
        assert!(matches!(exact_w2(&a, &b), Err(Error::SizeMismatch(3, 4))));
        let big = cloud(1, 1025, 1, 0.0, 1.0);
        assert!(matches!(exact_w2(&big, &big), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn flow_at_target_stays_put() {
        let y = cloud(6, 10, 2, 0.0, 1.0);
        let cfg = FlowConfig { eval_every: 5, ..FlowConfig::new(Estimator::Lcv, 10, 0.01, 20, 1) };
        let state = run_flow(&y, &y, &cfg).unwrap();
        assert_eq!(state.points, y.supports());
        assert_eq!(state.trace.len(), 5);
        assert!(state.trace.iter().all(|t| t.w2_squared.abs() < 1e-12));
    }

    #[test]
    fn flow_is_deterministic() {
        let x = cloud(7, 16, 2, 0.0, 1.0);
        let y = cloud(8, 16, 2, 3.0, 0.5);
        let cfg = FlowConfig { eval_every: 10, ..FlowConfig::new(Estimator::Ucv, 5, 0.01, 50, 3) };
        let a = run_flow(&x, &y, &cfg).unwrap();
        let b = run_flow(&x, &y, &cfg).unwrap();
        assert_eq!(a.points, b.points);
        let w = |s: &FlowState| s.trace.iter().map(|t| t.w2_squared).collect::<Vec<_>>();
        assert_eq!(w(&a), w(&b));
    }

    #[test]
    fn trace_rows() {
        let x = cloud(7, 8, 2, 0.0, 1.0);
        let y = cloud(8, 8, 2, 1.0, 1.0);
        let cfg = FlowConfig { eval_every: 100, ..FlowConfig::new(Estimator::Sw, 2, 0.01, 1000, 0) };
        assert_eq!(run_flow(&x, &y, &cfg).unwrap().trace.len(), 11);
        let cfg = FlowConfig { eval_every: 100, ..FlowConfig::new(Estimator::Sw, 2, 0.01, 250, 0) };
        let steps: Vec<usize> = run_flow(&x, &y, &cfg).unwrap().trace.iter().map(|t| t.step).collect();
        assert_eq!(steps, vec![0, 100, 200, 250]);
    }

    #[test]
    fn config_validation() {
        let x = cloud(1, 4, 2, 0.0, 1.0);
        let bad = [
            FlowConfig::new(Estimator::Sw, 10, 0.01, 0, 0),
            FlowConfig::new(Estimator::Sw, 0, 0.01, 10, 0),
            FlowConfig::new(Estimator::Sw, 10, -1.0, 10, 0),
            FlowConfig { p: 3.0, ..FlowConfig::new(Estimator::Sw, 10, 0.01, 10, 0) },
        ];
        for cfg in bad {
            assert!(matches!(run_flow(&x, &x, &cfg), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn divergence_is_reported() {
        let x = cloud(1, 4, 2, 0.0, 1.0);
        let y = cloud(2, 4, 2, 1e300, 1.0);
        let cfg = FlowConfig::new(Estimator::Sw, 3, 1e300, 5, 0);
        // the first evaluation already overflows the assignment costs but
        // must not panic; the update turns the cloud non-finite
        let out = run_flow(&x, &y, &cfg);
        assert!(out.is_err());
    }

    /// Estimate of `SW_2` at `x` with `gamma` held fixed.
    fn frozen_value(x: &DiscreteMeasure, nu: &DiscreteMeasure, est: Estimator, plan: &ProjectionPlan, gamma: f64) -> f64 {
        let mut acc = 0.0;
        let ctx = est.control_variate().map(|k| CvContext::new(k, x, nu).unwrap());
        for theta in plan.directions() {
            let px = project_unchecked(x, &theta);
            let py = project_unchecked(nu, &theta);
            acc += w1d_unchecked(&px, &py, 2.0);
            if let Some(ctx) = &ctx {
                acc -= gamma * ctx.control(&theta, &px, &py);
            }
        }
        let mut v = acc / plan.num_projections as f64;
        if let Some(ctx) = &ctx {
            v += gamma * ctx.expectation();
        }
        v.sqrt()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-6;
        for (k, est) in Estimator::ALL.into_iter().enumerate() {
            let x = cloud(10 + k as u64, 12, 3, 0.0, 1.0);
            let nu = cloud(20 + k as u64, 9, 3, 0.7, 1.5);
            let plan = ProjectionPlan::new(5, 40, 3).unwrap();
            let g = grad_estimator(&x, &nu, est, &plan).unwrap();
            assert!(!g.degenerate);
            let norm = g.grad.iter().map(|v| v * v).sum::<f64>().sqrt();
            for j in 0..x.supports().len() {
                let shifted = |delta: f64| {
                    let mut pts = x.supports().to_vec();
                    pts[j] += delta;
                    frozen_value(&DiscreteMeasure::uniform(pts, 3).unwrap(), &nu, est, &plan, g.gamma)
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                assert!((fd - g.grad[j]).abs() <= 1e-5 * norm, "{est} coord {j}: fd {fd} analytic {}", g.grad[j]);
            }
        }
    }

    #[test]
    fn flow_reduces_distance() {
        let x = cloud(30, 64, 2, 0.0, 1.0);
        let y = cloud(31, 64, 2, 4.0, 0.5);
        for est in Estimator::ALL {
            let cfg = FlowConfig { eval_every: 500, ..FlowConfig::new(est, 20, 0.01, 2000, 9) };
            let state = run_flow(&x, &y, &cfg).unwrap();
            let first = state.trace.first().unwrap().w2_squared;
            let last = state.trace.last().unwrap().w2_squared;
            assert!(last < 0.01 * first, "{est}: {first} -> {last}");
        }
    }
}
