//! Gaussian approximations of projected measures and the two control
//! variates built from them.
//!
//! For a direction `theta`, each projected measure is replaced by the Gaussian
//! with the same weighted mean and variance. The `W_2^2` between those two
//! Gaussians is `(m1 - m2)^2 + (s1 - s2)^2`, whose expectation over `theta` is
//! not available because of the cross term `s1 * s2`. Dropping the variance
//! part gives the lower control variate, replacing it by `s1^2 + s2^2` gives
//! the upper one; both have closed-form expectations over the uniform sphere
//! since `E[theta theta^T] = I/d`.

use crate::error::{check_dim, Error, Result};
use crate::measures::{dot, DiscreteMeasure};
use crate::ot1d::{GaussianFit1D, Projected1D};
use crate::slicing::{project_unchecked, Direction};

/// Which bound of the Gaussian `W_2^2` is used as control variate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CvKind {
    Lower,
    Upper,
}

/// Weighted mean and variance of a projected measure.
pub fn fit_gaussian_1d(a: &Projected1D) -> GaussianFit1D {
    let mean: f64 = a.values().iter().zip(a.weights()).map(|(v, w)| w * v).sum();
    let variance = centered_second_moment(a, mean);
    GaussianFit1D { mean, variance }
}

fn centered_second_moment(a: &Projected1D, center: f64) -> f64 {
    a.values()
        .iter()
        .zip(a.weights())
        .map(|(v, w)| {
            let c = v - center;
            w * c * c
        })
        .sum()
}

/// Maximum-likelihood Gaussian for an i.i.d. sample (biased variance).
pub fn sampling_fit(samples: &[f64]) -> Result<GaussianFit1D> {
    let proj = Projected1D::uniform(samples.to_vec())?;
    Ok(fit_gaussian_1d(&proj))
}

/// Per-pair quantities shared by every direction of one estimate.
///
/// Building the context costs `O(dn)`; afterwards the lower control variate
/// costs `O(d)` per direction and the upper one `O(n)` on top of the
/// projections the estimator computes anyway.
#[derive(Debug, Clone)]
pub struct CvContext {
    kind: CvKind,
    expectation: f64,
    mean_mu: Vec<f64>,
    mean_nu: Vec<f64>,
    spread_mu: f64,
    spread_nu: f64,
}

impl CvContext {
    pub fn new(kind: CvKind, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Self> {
        check_dim(mu.dim(), nu.dim())?;
        let mean_mu = mu.mean();
        let mean_nu = nu.mean();
        let spread_mu = mu.spread_about(&mean_mu);
        let spread_nu = nu.spread_about(&mean_nu);
        let d = mu.dim() as f64;
        let mean_gap: f64 = mean_mu.iter().zip(&mean_nu).map(|(a, b)| (a - b) * (a - b)).sum();
        let expectation = match kind {
            CvKind::Lower => mean_gap / d,
            CvKind::Upper => (mean_gap + (spread_mu + spread_nu)) / d,
        };
        Ok(Self { kind, expectation, mean_mu, mean_nu, spread_mu, spread_nu })
    }

    pub fn kind(&self) -> CvKind {
        self.kind
    }

    /// Exact expectation `B = E[C(theta)]` under the uniform law on the sphere.
    pub fn expectation(&self) -> f64 {
        self.expectation
    }

    pub fn mean_mu(&self) -> &[f64] {
        &self.mean_mu
    }

    pub fn mean_nu(&self) -> &[f64] {
        &self.mean_nu
    }

    /// `sum_i alpha_i |x_i - xbar|^2` and the same for `nu`.
    pub fn spreads(&self) -> (f64, f64) {
        (self.spread_mu, self.spread_nu)
    }

    /// `theta^T xbar - theta^T ybar`.
    pub fn projected_mean_gap(&self, theta: &Direction) -> f64 {
        dot(theta.coords(), &self.mean_mu) - dot(theta.coords(), &self.mean_nu)
    }

    /// Control variate value at `theta`. `proj_mu`/`proj_nu` must be the
    /// projections of the measures the context was built from; they are only
    /// read for the upper variate.
    pub fn control(&self, theta: &Direction, proj_mu: &Projected1D, proj_nu: &Projected1D) -> f64 {
        let gap = self.projected_mean_gap(theta);
        let mean_term = gap * gap;
        match self.kind {
            CvKind::Lower => mean_term,
            CvKind::Upper => {
                let var_mu = centered_second_moment(proj_mu, dot(theta.coords(), &self.mean_mu));
                let var_nu = centered_second_moment(proj_nu, dot(theta.coords(), &self.mean_nu));
                mean_term + (var_mu + var_nu)
            }
        }
    }
}

/// Lower control variate `(m1(theta) - m2(theta))^2`.
pub fn c_low(theta: &Direction, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    check_dim(mu.dim(), theta.dim())?;
    check_dim(nu.dim(), theta.dim())?;
    let gap = dot(theta.coords(), &mu.mean()) - dot(theta.coords(), &nu.mean());
    Ok(gap * gap)
}

/// Upper control variate `(m1 - m2)^2 + s1^2 + s2^2` of the projected fits.
pub fn c_up(theta: &Direction, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    check_dim(mu.dim(), theta.dim())?;
    check_dim(nu.dim(), theta.dim())?;
    let f1 = fit_gaussian_1d(&project_unchecked(mu, theta));
    let f2 = fit_gaussian_1d(&project_unchecked(nu, theta));
    let gap = f1.mean - f2.mean;
    Ok(gap * gap + (f1.variance + f2.variance))
}

/// `E[C(theta)]` for `theta` uniform on the sphere.
pub fn expectation_b(kind: CvKind, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    Ok(CvContext::new(kind, mu, nu)?.expectation())
}

/// Isotropic Gaussian `N(mean, variance * I)` fitted to a measure in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotropicFit {
    pub mean: Vec<f64>,
    pub variance: f64,
}

/// Mean `sum_i alpha_i x_i`; scale `(sum_i alpha_i |x_i - mean|^2)^(1/d)`.
///
/// The scale is the stationary point of the isotropic likelihood as written
/// with a `sigma^(2d)` normalizer, hence the d-th root. It only enters the
/// control variate through a constant, so the estimator is unaffected.
pub fn fit_isotropic(mu: &DiscreteMeasure) -> IsotropicFit {
    let mean = mu.mean();
    let spread = mu.spread_about(&mean);
    let variance = spread.powf(1.0 / mu.dim() as f64);
    IsotropicFit { mean, variance }
}

/// `W_2^2` between the projections of two isotropic fits onto `theta`:
/// `(theta^T m_a - theta^T m_b)^2 + (sqrt(v_a) - sqrt(v_b))^2`.
pub fn c_low_via_isotropic(theta: &Direction, a: &IsotropicFit, b: &IsotropicFit) -> Result<f64> {
    check_dim(a.mean.len(), theta.dim())?;
    check_dim(b.mean.len(), theta.dim())?;
    let gap = dot(theta.coords(), &a.mean) - dot(theta.coords(), &b.mean);
    let ds = a.variance.sqrt() - b.variance.sqrt();
    Ok(gap * gap + ds * ds)
}

/// Expectation of [`c_low_via_isotropic`] over the uniform sphere.
pub fn expectation_isotropic(a: &IsotropicFit, b: &IsotropicFit) -> Result<f64> {
    check_dim(a.mean.len(), b.mean.len())?;
    let d = a.mean.len() as f64;
    let gap: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    let ds = a.variance.sqrt() - b.variance.sqrt();
    Ok(gap / d + ds * ds)
}

const LAPLACE_MAX_STEPS: usize = 100;
const LAPLACE_GRAD_TOL: f64 = 1e-10;
const LAPLACE_STEP_TOL: f64 = 1e-10;
/// Curvatures above `-CURVATURE_FLOOR` are treated as flat.
const CURVATURE_FLOOR: f64 = 1e-12;

/// Laplace approximation of a univariate density from its log-density
/// derivatives: the mode `m` (found by damped Newton from `x0`) and
/// variance `-1 / (log f)''(m)`.
pub fn laplace_fit<G, H>(logpdf_grad: G, logpdf_hess: H, x0: f64) -> Result<GaussianFit1D>
where
    G: Fn(f64) -> f64,
    H: Fn(f64) -> f64,
{
    let mut x = x0;
    let mut g = logpdf_grad(x);
    if !g.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    for _ in 0..LAPLACE_MAX_STEPS {
        let h = logpdf_hess(x);
        // Newton towards the maximum; plain ascent where the curvature has
        // the wrong sign.
        let mut step = if h < 0.0 { -g / h } else { g };
        let mut next = x + step;
        let mut g_next = logpdf_grad(next);
        let mut halvings = 0;
        while !(g_next.is_finite() && g_next.abs() <= g.abs()) && halvings < 60 {
            step *= 0.5;
            next = x + step;
            g_next = logpdf_grad(next);
            halvings += 1;
        }
        x = next;
        g = g_next;
        if g.abs() < LAPLACE_GRAD_TOL && step.abs() <= LAPLACE_STEP_TOL * (1.0 + x.abs()) {
            let curvature = logpdf_hess(x);
            if curvature > -CURVATURE_FLOOR {
                return Err(Error::NonNegativeCurvature(curvature));
            }
            return GaussianFit1D::new(x, -1.0 / curvature);
        }
    }
    Err(Error::NoConvergence(LAPLACE_MAX_STEPS))
}
