//! Real Gaussian models with a common scalar mean, `N(theta * 1, cov)`.
//!
//! These two families cover the scalar counterexample (diagonal covariance
//! with one perturbed entry), the proportional-score pair (white/white with
//! unequal variances), and randomized order-relation experiments (arbitrary
//! positive-definite covariance).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DensityModel, Observation};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;

fn check_params(params: &DVector<f64>) -> Result<()> {
    if params.len() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: params.len() });
    }
    if !params[0].is_finite() {
        return Err(Error::InvalidInput("parameter must be finite".into()));
    }
    Ok(())
}

fn check_obs(x: &Observation, n: usize) -> Result<DVector<f64>> {
    let x = x.as_real()?;
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("observation must be finite".into()));
    }
    Ok(x.clone())
}

/// `N(theta * 1, cov)` with an arbitrary positive-definite covariance.
/// Typically the sampleable true model, but also usable on the assumed side
/// for correctly specified pairings.
#[derive(Debug, Clone)]
pub struct RealGaussianMeanTrue {
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
    /// `cov^{-1} 1`, the fixed direction every score projects onto.
    cov_inv_one: DVector<f64>,
    /// `1^T cov^{-1} 1`, the (negated) constant log-likelihood curvature.
    one_inv_one: f64,
}

impl RealGaussianMeanTrue {
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        let n = cov.nrows();
        if n == 0 || cov.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "covariance must be square with dim >= 1, got {}x{}",
                n,
                cov.ncols()
            )));
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariance must be finite".into()));
        }
        let scale = cov.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        if (&cov - cov.transpose()).iter().any(|v| v.abs() > 1e-12 * scale) {
            return Err(Error::InvalidInput("covariance must be symmetric".into()));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Decomposition("covariance not positive definite".into()))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let ones = DVector::from_element(n, 1.0);
        let cov_inv_one = chol.solve(&ones);
        let one_inv_one = ones.dot(&cov_inv_one);
        Ok(Self { cov, chol, log_det, cov_inv_one, one_inv_one })
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `cov^{-1} 1`.
    pub fn cov_inv_one(&self) -> &DVector<f64> {
        &self.cov_inv_one
    }

    /// `1^T cov^{-1} 1`.
    pub fn one_inv_one(&self) -> f64 {
        self.one_inv_one
    }
}

impl DensityModel for RealGaussianMeanTrue {
    fn param_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        self.cov.nrows()
    }

    fn log_pdf(&self, x: &Observation, params: &DVector<f64>) -> Result<f64> {
        check_params(params)?;
        let x = check_obs(x, self.obs_dim())?;
        let r = x.add_scalar(-params[0]);
        let quad = r.dot(&self.chol.solve(&r));
        Ok(-0.5 * (self.obs_dim() as f64 * LN_2PI + self.log_det + quad))
    }

    fn score(&self, x: &Observation, params: &DVector<f64>) -> Result<DVector<f64>> {
        check_params(params)?;
        let x = check_obs(x, self.obs_dim())?;
        let s = self.cov_inv_one.dot(&x) - params[0] * self.one_inv_one;
        Ok(DVector::from_element(1, s))
    }

    fn hessian(&self, x: &Observation, params: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_params(params)?;
        check_obs(x, self.obs_dim())?;
        Ok(DMatrix::from_element(1, 1, -self.one_inv_one))
    }

    fn can_sample(&self) -> bool {
        true
    }

    fn has_analytic_score(&self) -> bool {
        true
    }

    fn has_analytic_hessian(&self) -> bool {
        true
    }

    fn sample(&self, params: &DVector<f64>, rng: &mut ChaCha8Rng) -> Result<Observation> {
        check_params(params)?;
        let n = self.obs_dim();
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let x = DVector::from_element(n, params[0]) + self.chol.l() * z;
        Ok(Observation::Real(x))
    }

    fn mean_observation(&self, params: &DVector<f64>) -> Result<Observation> {
        check_params(params)?;
        Ok(Observation::Real(DVector::from_element(self.obs_dim(), params[0])))
    }

    fn cov_trace(&self) -> Option<f64> {
        Some(self.cov.trace())
    }

    fn affine_in_observation(&self) -> bool {
        true
    }

    fn cov_matrix(&self) -> Option<DMatrix<f64>> {
        Some(self.cov.clone())
    }
}

/// `N(theta * 1, sigma2 * I)`: the white assumed model. Deliberately not
/// sampleable; only the log-likelihood side of an assumed model is ever used.
#[derive(Debug, Clone)]
pub struct WhiteGaussianMeanAssumed {
    n: usize,
    sigma2: f64,
}

impl WhiteGaussianMeanAssumed {
    pub fn new(n: usize, sigma2: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("observation dimension must be >= 1".into()));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::InvalidInput("noise variance must be finite and > 0".into()));
        }
        Ok(Self { n, sigma2 })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
}

impl DensityModel for WhiteGaussianMeanAssumed {
    fn param_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        self.n
    }

    fn log_pdf(&self, x: &Observation, params: &DVector<f64>) -> Result<f64> {
        check_params(params)?;
        let x = check_obs(x, self.n)?;
        let r = x.add_scalar(-params[0]);
        Ok(-0.5 * (self.n as f64 * (LN_2PI + self.sigma2.ln()) + r.norm_squared() / self.sigma2))
    }

    fn score(&self, x: &Observation, params: &DVector<f64>) -> Result<DVector<f64>> {
        check_params(params)?;
        let x = check_obs(x, self.n)?;
        let s = (x.sum() - self.n as f64 * params[0]) / self.sigma2;
        Ok(DVector::from_element(1, s))
    }

    fn hessian(&self, x: &Observation, params: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_params(params)?;
        check_obs(x, self.n)?;
        Ok(DMatrix::from_element(1, 1, -(self.n as f64) / self.sigma2))
    }

    fn has_analytic_score(&self) -> bool {
        true
    }

    fn has_analytic_hessian(&self) -> bool {
        true
    }

    fn mean_observation(&self, params: &DVector<f64>) -> Result<Observation> {
        check_params(params)?;
        Ok(Observation::Real(DVector::from_element(self.n, params[0])))
    }

    fn cov_trace(&self) -> Option<f64> {
        Some(self.n as f64 * self.sigma2)
    }

    fn affine_in_observation(&self) -> bool {
        true
    }

    fn white_noise_var(&self) -> Option<f64> {
        Some(self.sigma2)
    }

    fn cov_matrix(&self) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_diagonal(&DVector::from_element(self.n, self.sigma2)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{fd_gradient_auto, RngStream};

    fn box1_true(n: usize, sigma2: f64, eps: f64) -> RealGaussianMeanTrue {
        let mut diag = DVector::from_element(n, sigma2);
        diag[0] = eps;
        RealGaussianMeanTrue::new(DMatrix::from_diagonal(&diag)).unwrap()
    }

    #[test]
    fn true_score_matches_closed_form_and_fd() {
        let m = box1_true(4, 1.0, 0.1);
        let x = Observation::Real(DVector::from_vec(vec![0.5, -0.3, 1.2, 0.7]));
        let p = DVector::from_element(1, 0.2);
        // Closed form: x1/eps + sum_{k>1} xk/s2 - theta (1/eps + (N-1)/s2).
        let expected = 0.5 / 0.1 + (-0.3 + 1.2 + 0.7) - 0.2 * (1.0 / 0.1 + 3.0);
        let s = m.score(&x, &p).unwrap();
        assert!((s[0] - expected).abs() < 1e-12);
        let fd = fd_gradient_auto(|q| m.log_pdf(&x, q), &p).unwrap();
        assert!((s[0] - fd[0]).abs() < 1e-6 * s[0].abs().max(1.0));
    }

    #[test]
    fn true_hessian_is_constant_curvature() {
        let m = box1_true(4, 1.0, 0.1);
        let x = Observation::Real(DVector::from_vec(vec![0.5, -0.3, 1.2, 0.7]));
        let h = m.hessian(&x, &DVector::from_element(1, 0.2)).unwrap();
        assert!((h[(0, 0)] + 13.0).abs() < 1e-10);
    }

    #[test]
    fn assumed_score_matches_fd() {
        let m = WhiteGaussianMeanAssumed::new(5, 0.7).unwrap();
        let x = Observation::Real(DVector::from_vec(vec![0.5, -0.3, 1.2, 0.7, -0.1]));
        let p = DVector::from_element(1, -0.4);
        let s = m.score(&x, &p).unwrap();
        let fd = fd_gradient_auto(|q| m.log_pdf(&x, q), &p).unwrap();
        assert!((s[0] - fd[0]).abs() < 1e-6 * s[0].abs().max(1.0));
        let h = m.hessian(&x, &p).unwrap();
        assert!((h[(0, 0)] + 5.0 / 0.7).abs() < 1e-12);
    }

    #[test]
    fn score_vanishes_at_the_mean_observation() {
        // With affine scores, E[score] reduces to the score at the mean.
        let m = box1_true(6, 2.0, 0.05);
        let p = DVector::from_element(1, 1.3);
        let mean = m.mean_observation(&p).unwrap();
        let s = m.score(&mean, &p).unwrap();
        assert!(s[0].abs() < 1e-12);
    }

    #[test]
    fn sample_mean_recovers_parameter() {
        let m = box1_true(4, 1.0, 0.1);
        let p = DVector::from_element(1, 0.8);
        let mut rng = RngStream::new(3, 9).rng();
        let n_draws = 50_000;
        let mut sum = 0.0;
        for _ in 0..n_draws {
            let x = m.sample(&p, &mut rng).unwrap();
            sum += x.as_real().unwrap().mean();
        }
        // Var of the per-draw mean is (eps + 3 s2)/16; 5-sigma band.
        let se = ((0.1 + 3.0) / 16.0 / n_draws as f64).sqrt();
        assert!((sum / n_draws as f64 - 0.8).abs() < 5.0 * se);
    }

    #[test]
    fn assumed_model_refuses_to_sample() {
        let m = WhiteGaussianMeanAssumed::new(3, 1.0).unwrap();
        let p = DVector::from_element(1, 0.0);
        assert!(matches!(
            m.sample(&p, &mut RngStream::new(0, 0).rng()),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn non_pd_covariance_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(RealGaussianMeanTrue::new(cov).is_err());
    }

    #[test]
    fn complex_observation_rejected() {
        let m = WhiteGaussianMeanAssumed::new(2, 1.0).unwrap();
        let x = Observation::Complex(nalgebra::DVector::from_element(
            2,
            num_complex::Complex64::new(0.0, 0.0),
        ));
        assert!(m.log_pdf(&x, &DVector::from_element(1, 0.0)).is_err());
    }
}
