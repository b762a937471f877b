//! Sliced Wasserstein distances estimated by Monte Carlo over random
//! directions, with Gaussian control variates that reduce the variance of the
//! estimate at no extra asymptotic cost.
//!
//! The crate is organized bottom-up:
//!
//! - [`measures`]: weighted point clouds and their file formats
//! - [`ot1d`]: exact 1D Wasserstein distances and Gaussian closed forms
//! - [`slicing`]: uniform directions on the sphere and projections
//! - [`gauss_cv`]: Gaussian fits and the lower/upper control variates
//! - [`estimators`]: the plain and controlled Monte Carlo estimators
//! - [`flows`]: point-cloud gradient flows driven by the estimators
//! - [`twosample`]: permutation two-sample tests
//! - [`cli`]: the `swcv` command-line front end

mod assignment;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod flows;
pub mod gauss_cv;
pub mod measures;
pub mod ot1d;
pub mod rng;
pub mod slicing;
pub mod synthetic;
pub mod twosample;

pub use error::{Error, Result};
pub use estimators::{cv_sw, estimate, sw_mc, EstimateReport, Estimator};
pub use gauss_cv::CvKind;
pub use measures::{DataFormat, DatasetHandle, DiscreteMeasure};
pub use ot1d::{w1d, GaussianFit1D, Projected1D};
pub use slicing::{Direction, ProjectionPlan};
