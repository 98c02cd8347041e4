//! Statistical-model abstraction and the built-in true/assumed model families.
//!
//! A [`DensityModel`] exposes a log-density together with its score and
//! Hessian in the parameters, and optionally sampling. A
//! [`MisspecifiedProblem`] pairs a sampleable true model with an assumed
//! model and a true-parameter point; the rest of the crate works against
//! that pair.
//!
//! Built-ins cover the scalar Gaussian mean families (diagonal-perturbed,
//! white/white with unequal variances, arbitrary PD covariance) and the
//! single-source DOA model with colored noise. All built-ins have full
//! observation support, so strict positivity of the assumed density on the
//! support of the true density holds by construction.

mod doa;
mod real_gaussian;

pub(crate) use doa::mean_jacobian;
pub use doa::{DoaAssumed, DoaTrue, SteeringArray};
pub use real_gaussian::{RealGaussianMeanTrue, WhiteGaussianMeanAssumed};

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{fd_gradient_auto, fd_jacobian, fd_step};

/// An observation vector: real for the scalar-mean families, complex for DOA.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Real(DVector<f64>),
    Complex(DVector<Complex64>),
}

impl Observation {
    pub fn dim(&self) -> usize {
        match self {
            Observation::Real(v) => v.len(),
            Observation::Complex(v) => v.len(),
        }
    }

    pub fn as_real(&self) -> Result<&DVector<f64>> {
        match self {
            Observation::Real(v) => Ok(v),
            Observation::Complex(_) => {
                Err(Error::InvalidInput("expected a real observation".into()))
            }
        }
    }

    pub fn as_complex(&self) -> Result<&DVector<Complex64>> {
        match self {
            Observation::Complex(v) => Ok(v),
            Observation::Real(_) => {
                Err(Error::InvalidInput("expected a complex observation".into()))
            }
        }
    }
}

/// A parametric density with differentiable log-likelihood.
///
/// `score` and `hessian` default to central finite differences of `log_pdf`,
/// so custom models only need the density itself; built-ins override both
/// with closed forms.
pub trait DensityModel: Send + Sync + Debug {
    fn param_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;

    /// Natural-log density at `x`. For the complex circular Gaussian this is
    /// `-M log pi - log det S - (x-mu)^H S^{-1} (x-mu)`.
    fn log_pdf(&self, x: &Observation, params: &DVector<f64>) -> Result<f64>;

    /// Gradient of `log_pdf` in the parameters.
    fn score(&self, x: &Observation, params: &DVector<f64>) -> Result<DVector<f64>> {
        fd_gradient_auto(|p| self.log_pdf(x, p), params)
    }

    /// Hessian of `log_pdf` in the parameters.
    fn hessian(&self, x: &Observation, params: &DVector<f64>) -> Result<DMatrix<f64>> {
        let h = params.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let jac = fd_jacobian(|p| self.score(x, p), params, fd_step(h))?;
        Ok((&jac + jac.transpose()).scale(0.5))
    }

    fn can_sample(&self) -> bool {
        false
    }

    fn has_analytic_score(&self) -> bool {
        false
    }

    fn has_analytic_hessian(&self) -> bool {
        false
    }

    /// One i.i.d. draw at `params`. Assumed-side models need not sample.
    fn sample(&self, _params: &DVector<f64>, _rng: &mut ChaCha8Rng) -> Result<Observation> {
        Err(Error::Capability("this model does not support sampling".into()))
    }

    /// Mean of the observation at `params`, when the model exposes one.
    fn mean_observation(&self, _params: &DVector<f64>) -> Result<Observation> {
        Err(Error::Capability("this model does not expose its mean".into()))
    }

    /// Trace of the observation covariance (complex convention for complex
    /// models), when available. Enables exact-expectation objectives.
    fn cov_trace(&self) -> Option<f64> {
        None
    }

    /// True when score and Hessian are affine in the observation, so
    /// expectations under any distribution reduce to evaluation at its mean.
    fn affine_in_observation(&self) -> bool {
        false
    }

    /// True for models over complex observations.
    fn is_complex(&self) -> bool {
        false
    }

    /// Noise variance when the model is Gaussian with covariance
    /// `white_noise_var * I`; lets callers form exact expected log-likelihoods.
    fn white_noise_var(&self) -> Option<f64> {
        None
    }

    /// Full observation covariance for real Gaussian models.
    fn cov_matrix(&self) -> Option<DMatrix<f64>> {
        None
    }
}

/// How closed-form information matrices are obtained for a built-in pair.
#[derive(Debug, Clone)]
pub enum BuiltinSpec {
    /// True model `N(theta 1, cov)` against assumed `N(theta 1, assumed_var I)`.
    RealMean { cov: DMatrix<f64>, assumed_var: f64 },
    /// Single-source DOA with Toeplitz colored noise against a white model.
    Doa { m: usize, sigma2: f64, rho: f64 },
    /// Identical true/assumed models (correct specification).
    CorrectlySpecified { cov: DMatrix<f64> },
}

/// A paired (true model, assumed model, true-parameter point) defining one
/// estimation scenario.
#[derive(Debug, Clone)]
pub struct MisspecifiedProblem {
    pub true_model: Arc<dyn DensityModel>,
    pub assumed_model: Arc<dyn DensityModel>,
    pub theta0: DVector<f64>,
    /// Present for built-in pairs; enables closed-form information matrices.
    pub builtin: Option<BuiltinSpec>,
}

impl MisspecifiedProblem {
    pub fn new(
        true_model: Arc<dyn DensityModel>,
        assumed_model: Arc<dyn DensityModel>,
        theta0: DVector<f64>,
    ) -> Result<Self> {
        if true_model.obs_dim() != assumed_model.obs_dim() {
            return Err(Error::DimensionMismatch {
                expected: true_model.obs_dim(),
                got: assumed_model.obs_dim(),
            });
        }
        if theta0.len() != true_model.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: true_model.param_dim(),
                got: theta0.len(),
            });
        }
        if theta0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("theta0 must be finite".into()));
        }
        Ok(Self { true_model, assumed_model, theta0, builtin: None })
    }

    fn with_builtin(mut self, spec: BuiltinSpec) -> Self {
        self.builtin = Some(spec);
        self
    }

    /// Dimension of the true parameter vector (N1).
    pub fn true_param_dim(&self) -> usize {
        self.true_model.param_dim()
    }

    /// Dimension of the assumed parameter vector (N2).
    pub fn assumed_param_dim(&self) -> usize {
        self.assumed_model.param_dim()
    }
}

/// Scalar Gaussian counterexample pair: true `N(theta 1, diag(eps, s2, ..., s2))`
/// against assumed `N(theta 1, s2 I)`.
pub fn box1_problem(n: usize, sigma2: f64, eps: f64, theta0: f64) -> Result<MisspecifiedProblem> {
    if eps <= 0.0 || sigma2 <= 0.0 {
        return Err(Error::InvalidInput("variances must be > 0".into()));
    }
    let mut diag = DVector::from_element(n, sigma2);
    diag[0] = eps;
    let cov = DMatrix::from_diagonal(&diag);
    gaussian_mean_problem(cov, sigma2, theta0)
}

/// Proportional-score pair: true `N(theta 1, s1 I)` against assumed `N(theta 1, s2 I)`.
pub fn box3_problem(
    n: usize,
    sigma1_sq: f64,
    sigma2_sq: f64,
    theta0: f64,
) -> Result<MisspecifiedProblem> {
    if sigma1_sq <= 0.0 || sigma2_sq <= 0.0 {
        return Err(Error::InvalidInput("variances must be > 0".into()));
    }
    let cov = DMatrix::from_diagonal(&DVector::from_element(n, sigma1_sq));
    gaussian_mean_problem(cov, sigma2_sq, theta0)
}

/// General scalar-mean pair: true `N(theta 1, cov)` against a white assumed
/// model with variance `assumed_var`. Covers Box 1, Box 3, and randomized
/// order-relation experiments.
pub fn gaussian_mean_problem(
    cov: DMatrix<f64>,
    assumed_var: f64,
    theta0: f64,
) -> Result<MisspecifiedProblem> {
    let n = cov.nrows();
    let true_model = Arc::new(RealGaussianMeanTrue::new(cov.clone())?);
    let assumed_model = Arc::new(WhiteGaussianMeanAssumed::new(n, assumed_var)?);
    Ok(MisspecifiedProblem::new(true_model, assumed_model, DVector::from_element(1, theta0))?
        .with_builtin(BuiltinSpec::RealMean { cov, assumed_var }))
}

/// Correctly specified scalar pair (f = p); used for collapse checks.
pub fn correctly_specified_problem(cov: DMatrix<f64>, theta0: f64) -> Result<MisspecifiedProblem> {
    let model = Arc::new(RealGaussianMeanTrue::new(cov.clone())?);
    Ok(MisspecifiedProblem::new(model.clone(), model, DVector::from_element(1, theta0))?
        .with_builtin(BuiltinSpec::CorrectlySpecified { cov }))
}

/// Single-source DOA pair: colored circular Gaussian noise (Toeplitz
/// `sigma2 * rho^|i-j|`) against an assumed white model with the same
/// diagonal variance. True parameters are `[phi, s_re, s_im]`.
pub fn doa_problem(
    m: usize,
    sigma2: f64,
    rho: f64,
    phi: f64,
    s_re: f64,
    s_im: f64,
) -> Result<MisspecifiedProblem> {
    let true_model = Arc::new(DoaTrue::new(m, sigma2, rho)?);
    let assumed_model = Arc::new(DoaAssumed::new(m, sigma2)?);
    let theta0 = DVector::from_vec(vec![phi, s_re, s_im]);
    Ok(MisspecifiedProblem::new(true_model, assumed_model, theta0)?
        .with_builtin(BuiltinSpec::Doa { m, sigma2, rho }))
}
