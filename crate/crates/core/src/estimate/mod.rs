//! Quasi-maximum likelihood estimation of DAR(p) models.
//!
//! The estimators share one conditional objective. Writing `m_t` and `h_t` for the
//! conditional mean and variance built from the first `p` observations onward, and
//! `g` for the innovation density in use, the sample quasi-log-likelihood is
//!
//! ```text
//!   sum_{t=p+1}^{n} W_t,    W_t = -log(h_t)/2 + log g((y_t - m_t)/sqrt(h_t)).
//! ```
//!
//! * [`fit_nmqmle`] maximizes it with `g` a K-component constrained normal mixture,
//!   jointly over the structural parameters and the 3(K-1) free mixture coordinates.
//! * [`fit_gaussian_qmle`] is exactly the K = 1 case.
//! * [`fit_mle`] fixes `g` at a known innovation law and estimates the structural
//!   parameters alone.
//! * [`fit_two_stage_qmle`] is the conventional unweighted baseline: least-squares
//!   autoregression first, then a Gaussian volatility fit on its residuals.
//!
//! Optimization runs in an unconstrained space (stick-breaking logits for weights,
//! logs for scale-like parameters) with a hand-rolled BFGS and backtracking line
//! search; points whose completed mixture is infeasible score `+inf` and the line
//! search backs away from them. Analytic first derivatives feed the optimizer and
//! the outer-product term of the sandwich covariance.

mod fit;
mod objective;
mod optim;
mod sandwich;
mod transform;

pub use fit::{
    fit_gaussian_qmle, fit_mle, fit_nmqmle, fit_two_stage_qmle, FitConfig, FitResult, FullTheta,
};
pub use objective::{neg_quasi_loglik, score, theta1_hessian_block};
pub use sandwich::sandwich_covariance;

use thiserror::Error;

use crate::dar::DarError;
use crate::innovations::InnovationError;
use crate::mixture::MixtureError;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("series has {n} observations; order {p} with K = {k} needs at least {need}")]
    TooShort { n: usize, p: usize, k: usize, need: usize },
    #[error("invalid estimation setup: {0}")]
    InvalidConfig(String),
    #[error("no optimizer start produced a finite objective")]
    AllStartsFailed,
    #[error("parameter point is infeasible: {0}")]
    Infeasible(String),
    #[error("hessian is singular or indefinite at the fit: {0}")]
    SingularHessian(String),
    #[error(transparent)]
    Dar(#[from] DarError),
    #[error(transparent)]
    Mixture(#[from] MixtureError),
    #[error(transparent)]
    Innovation(#[from] InnovationError),
}
