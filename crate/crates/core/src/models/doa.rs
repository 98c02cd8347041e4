//! Single-source direction-of-arrival models on a uniform linear array.
//!
//! The observation is one complex circular Gaussian snapshot
//! `x = a(phi) s + v` on an M-element half-wavelength ULA. The real parameter
//! vector is `[phi, Re s, Im s]`. The true model carries exponentially
//! correlated noise, `cov_ij = sigma2 * rho^|i-j|`; the assumed model takes
//! the noise white with the same per-sensor variance.
//!
//! Sensor positions are centered, `d_m = m - (M+1)/2` in half-wavelength
//! units, so `a(phi)^H da/dphi = 0` holds exactly and the direction and
//! source coordinates decouple in the white-noise information matrix.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DensityModel, Observation};
use crate::error::{Error, Result};

const LN_PI: f64 = 1.1447298858494002;

/// Geometry of a centered half-wavelength uniform linear array.
#[derive(Debug, Clone)]
pub struct SteeringArray {
    positions: Vec<f64>,
}

impl SteeringArray {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput("array needs at least 2 sensors".into()));
        }
        let mid = (m as f64 + 1.0) / 2.0;
        Ok(Self { positions: (1..=m).map(|k| k as f64 - mid).collect() })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Steering vector `a_m(phi) = exp(j pi d_m sin phi)`.
    pub fn steering(&self, phi: f64) -> DVector<Complex64> {
        let s = PI * phi.sin();
        DVector::from_iterator(
            self.len(),
            self.positions.iter().map(|&d| Complex64::new(0.0, d * s).exp()),
        )
    }

    /// First derivative of the steering vector in `phi`.
    pub fn steering_d1(&self, phi: f64) -> DVector<Complex64> {
        let c = PI * phi.cos();
        let a = self.steering(phi);
        DVector::from_iterator(
            self.len(),
            self.positions.iter().zip(a.iter()).map(|(&d, am)| Complex64::new(0.0, d * c) * am),
        )
    }

    /// Second derivative of the steering vector in `phi`.
    pub fn steering_d2(&self, phi: f64) -> DVector<Complex64> {
        let c = PI * phi.cos();
        let s = PI * phi.sin();
        let a = self.steering(phi);
        DVector::from_iterator(
            self.len(),
            self.positions.iter().zip(a.iter()).map(|(&d, am)| {
                let jc = Complex64::new(0.0, d * c);
                (jc * jc - Complex64::new(0.0, d * s)) * am
            }),
        )
    }

    /// Squared norm of the steering derivative, `pi^2 cos^2(phi) sum d_m^2`.
    pub fn d1_norm_squared(&self, phi: f64) -> f64 {
        let c = PI * phi.cos();
        c * c * self.positions.iter().map(|d| d * d).sum::<f64>()
    }
}

/// Mean `mu = a(phi) s` together with its first and the nonzero second
/// parameter derivatives; shared by both DOA models.
struct MeanGeometry {
    mu: DVector<Complex64>,
    /// Columns of the mean Jacobian: d mu/d phi, d mu/d Re s, d mu/d Im s.
    d: [DVector<Complex64>; 3],
    /// Nonzero second derivatives: (phi,phi), (phi,Re s), (phi,Im s).
    h: [DVector<Complex64>; 3],
}

fn check_params(params: &DVector<f64>) -> Result<()> {
    if params.len() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: params.len() });
    }
    if params.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("parameters must be finite".into()));
    }
    if params[0] <= -FRAC_PI_2 || params[0] >= FRAC_PI_2 {
        return Err(Error::Domain(format!(
            "direction {} outside the open interval (-pi/2, pi/2)",
            params[0]
        )));
    }
    Ok(())
}

fn check_obs(x: &Observation, m: usize) -> Result<DVector<Complex64>> {
    let x = x.as_complex()?;
    if x.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: x.len() });
    }
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::InvalidInput("observation must be finite".into()));
    }
    Ok(x.clone())
}

fn geometry(arr: &SteeringArray, params: &DVector<f64>) -> MeanGeometry {
    let s = Complex64::new(params[1], params[2]);
    let j = Complex64::new(0.0, 1.0);
    let a = arr.steering(params[0]);
    let ad = arr.steering_d1(params[0]);
    let add = arr.steering_d2(params[0]);
    MeanGeometry {
        mu: a.map(|v| v * s),
        d: [ad.map(|v| v * s), a.clone(), a.map(|v| v * j)],
        h: [add.map(|v| v * s), ad.clone(), ad.map(|v| v * j)],
    }
}

/// `score_k = 2 Re{d_k^H y}` with `y = cov^{-1}(x - mu)`.
fn score_from(geo: &MeanGeometry, y: &DVector<Complex64>) -> DVector<f64> {
    DVector::from_iterator(3, geo.d.iter().map(|dk| 2.0 * dk.dotc(y).re))
}

/// `hess_kl = 2 Re{h_kl^H y} - 2 Re{d_k^H cov^{-1} d_l}`.
fn hessian_from<S>(geo: &MeanGeometry, y: &DVector<Complex64>, solve: S) -> DMatrix<f64>
where
    S: Fn(&DVector<Complex64>) -> DVector<Complex64>,
{
    let mut hess = DMatrix::zeros(3, 3);
    hess[(0, 0)] = 2.0 * geo.h[0].dotc(y).re;
    for l in 1..3 {
        let v = 2.0 * geo.h[l].dotc(y).re;
        hess[(0, l)] = v;
        hess[(l, 0)] = v;
    }
    for l in 0..3 {
        let yl = solve(&geo.d[l]);
        for k in 0..3 {
            hess[(k, l)] -= 2.0 * geo.d[k].dotc(&yl).re;
        }
    }
    (hess.clone() + hess.transpose()).scale(0.5)
}

/// Columns of the mean Jacobian `d mu / d theta` at `params`.
pub(crate) fn mean_jacobian(
    arr: &SteeringArray,
    params: &DVector<f64>,
) -> Result<[DVector<Complex64>; 3]> {
    check_params(params)?;
    Ok(geometry(arr, params).d)
}

/// True DOA model: `CN(a(phi) s, cov)` with Toeplitz `cov_ij = sigma2 rho^|i-j|`.
#[derive(Debug, Clone)]
pub struct DoaTrue {
    arr: SteeringArray,
    sigma2: f64,
    rho: f64,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl DoaTrue {
    pub fn new(m: usize, sigma2: f64, rho: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::InvalidInput("noise variance must be finite and > 0".into()));
        }
        if !(rho.is_finite() && rho.abs() < 1.0) {
            return Err(Error::InvalidInput("correlation must satisfy |rho| < 1".into()));
        }
        let arr = SteeringArray::new(m)?;
        let cov = toeplitz_cov(m, sigma2, rho);
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Decomposition("noise covariance not positive definite".into()))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self { arr, sigma2, rho, cov, chol, log_det })
    }

    pub fn array(&self) -> &SteeringArray {
        &self.arr
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Applies `cov^{-1}` to a complex vector; the covariance is real, so the
    /// real and imaginary parts solve independently.
    pub fn solve_cov(&self, z: &DVector<Complex64>) -> DVector<Complex64> {
        let re = self.chol.solve(&z.map(|v| v.re));
        let im = self.chol.solve(&z.map(|v| v.im));
        DVector::from_fn(z.len(), |i, _| Complex64::new(re[i], im[i]))
    }
}

/// The exponentially correlated noise covariance `sigma2 * rho^|i-j|`.
pub fn toeplitz_cov(m: usize, sigma2: f64, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| sigma2 * rho.powi((i as i32 - j as i32).abs()))
}

impl DensityModel for DoaTrue {
    fn param_dim(&self) -> usize {
        3
    }

    fn obs_dim(&self) -> usize {
        self.arr.len()
    }

    fn log_pdf(&self, x: &Observation, params: &DVector<f64>) -> Result<f64> {
        check_params(params)?;
        let x = check_obs(x, self.obs_dim())?;
        let geo = geometry(&self.arr, params);
        let r = &x - &geo.mu;
        let quad = r.dotc(&self.solve_cov(&r)).re;
        Ok(-(self.obs_dim() as f64) * LN_PI - self.log_det - quad)
    }

    fn score(&self, x: &Observation, params: &DVector<f64>) -> Result<DVector<f64>> {
        check_params(params)?;
        let x = check_obs(x, self.obs_dim())?;
        let geo = geometry(&self.arr, params);
        let y = self.solve_cov(&(&x - &geo.mu));
        Ok(score_from(&geo, &y))
    }

    fn hessian(&self, x: &Observation, params: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_params(params)?;
        let x = check_obs(x, self.obs_dim())?;
        let geo = geometry(&self.arr, params);
        let y = self.solve_cov(&(&x - &geo.mu));
        Ok(hessian_from(&geo, &y, |z| self.solve_cov(z)))
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
        let geo = geometry(&self.arr, params);
        let m = self.obs_dim();
        // Circular noise: v = L w with real L (chol of cov) and w standard
        // complex normal, so E[v v^H] = cov and E[v v^T] = 0.
        let w = DVector::from_fn(m, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        });
        let l = self.chol.l();
        let v = DVector::from_fn(m, |i, _| {
            (0..=i).map(|k| l[(i, k)] * w[k]).sum::<Complex64>()
        });
        Ok(Observation::Complex(&geo.mu + v))
    }

    fn mean_observation(&self, params: &DVector<f64>) -> Result<Observation> {
        check_params(params)?;
        Ok(Observation::Complex(geometry(&self.arr, params).mu))
    }

    fn cov_trace(&self) -> Option<f64> {
        Some(self.obs_dim() as f64 * self.sigma2)
    }

    fn affine_in_observation(&self) -> bool {
        true
    }

    fn is_complex(&self) -> bool {
        true
    }
}

/// Assumed DOA model: `CN(a(phi) s, sigma2 * I)`.
#[derive(Debug, Clone)]
pub struct DoaAssumed {
    arr: SteeringArray,
    sigma2: f64,
}

impl DoaAssumed {
    pub fn new(m: usize, sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::InvalidInput("noise variance must be finite and > 0".into()));
        }
        Ok(Self { arr: SteeringArray::new(m)?, sigma2 })
    }

    pub fn array(&self) -> &SteeringArray {
        &self.arr
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
}

impl DensityModel for DoaAssumed {
    fn param_dim(&self) -> usize {
        3
    }

    fn obs_dim(&self) -> usize {
        self.arr.len()
    }

    fn log_pdf(&self, x: &Observation, params: &DVector<f64>) -> Result<f64> {
        check_params(params)?;
        let x = check_obs(x, self.obs_dim())?;
        let geo = geometry(&self.arr, params);
        let r = &x - &geo.mu;
        let m = self.obs_dim() as f64;
        Ok(-m * (LN_PI + self.sigma2.ln()) - r.norm_squared() / self.sigma2)
    }

    fn score(&self, x: &Observation, params: &DVector<f64>) -> Result<DVector<f64>> {
        check_params(params)?;
        let x = check_obs(x, self.obs_dim())?;
        let geo = geometry(&self.arr, params);
        let y = (&x - &geo.mu).unscale(self.sigma2);
        Ok(score_from(&geo, &y))
    }

    fn hessian(&self, x: &Observation, params: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_params(params)?;
        let x = check_obs(x, self.obs_dim())?;
        let geo = geometry(&self.arr, params);
        let y = (&x - &geo.mu).unscale(self.sigma2);
        Ok(hessian_from(&geo, &y, |z| z.unscale(self.sigma2)))
    }

    fn has_analytic_score(&self) -> bool {
        true
    }

    fn has_analytic_hessian(&self) -> bool {
        true
    }

    fn mean_observation(&self, params: &DVector<f64>) -> Result<Observation> {
        check_params(params)?;
        Ok(Observation::Complex(geometry(&self.arr, params).mu))
    }

    fn cov_trace(&self) -> Option<f64> {
        Some(self.obs_dim() as f64 * self.sigma2)
    }

    fn affine_in_observation(&self) -> bool {
        true
    }

    fn is_complex(&self) -> bool {
        true
    }

    fn white_noise_var(&self) -> Option<f64> {
        Some(self.sigma2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{fd_gradient_auto, fd_jacobian, fd_step, MatrixAccumulator, RngStream};

    fn params() -> DVector<f64> {
        DVector::from_vec(vec![PI / 8.0, (PI / 4.0).cos(), (PI / 4.0).sin()])
    }

    fn snapshot(m: usize) -> Observation {
        // Arbitrary fixed complex observation.
        Observation::Complex(DVector::from_fn(m, |i, _| {
            Complex64::new(0.3 + 0.1 * i as f64, -0.2 + 0.05 * i as f64)
        }))
    }

    #[test]
    fn steering_orthogonal_to_derivative() {
        // Centered positions make a^H a' vanish identically.
        let arr = SteeringArray::new(8).unwrap();
        for &phi in &[0.0, PI / 8.0, -0.7, 1.2] {
            let ip = arr.steering(phi).dotc(&arr.steering_d1(phi));
            assert!(ip.norm() < 1e-12, "a^H a' = {ip} at phi = {phi}");
        }
    }

    #[test]
    fn steering_derivatives_match_fd() {
        let arr = SteeringArray::new(5).unwrap();
        let phi = 0.35;
        let h = fd_step(phi);
        let fd1 = (arr.steering(phi + h) - arr.steering(phi - h)).unscale(2.0 * h);
        let d1 = arr.steering_d1(phi);
        assert!((&d1 - fd1).norm() < 1e-6 * d1.norm());
        let fd2 = (arr.steering_d1(phi + h) - arr.steering_d1(phi - h)).unscale(2.0 * h);
        let d2 = arr.steering_d2(phi);
        assert!((&d2 - fd2).norm() < 1e-6 * d2.norm());
    }

    #[test]
    fn true_score_matches_fd() {
        let m = DoaTrue::new(6, 0.1, 0.5).unwrap();
        let x = snapshot(6);
        let p = params();
        let s = m.score(&x, &p).unwrap();
        let fd = fd_gradient_auto(|q| m.log_pdf(&x, q), &p).unwrap();
        assert!((&s - &fd).norm() < 1e-6 * s.norm().max(1.0));
    }

    #[test]
    fn assumed_score_matches_fd() {
        let m = DoaAssumed::new(6, 0.1).unwrap();
        let x = snapshot(6);
        let p = params();
        let s = m.score(&x, &p).unwrap();
        let fd = fd_gradient_auto(|q| m.log_pdf(&x, q), &p).unwrap();
        assert!((&s - &fd).norm() < 1e-6 * s.norm().max(1.0));
    }

    #[test]
    fn hessians_match_fd_of_score() {
        let p = params();
        let h_step = fd_step(1.0);
        let mt = DoaTrue::new(5, 0.2, 0.4).unwrap();
        let ma = DoaAssumed::new(5, 0.2).unwrap();
        let x = snapshot(5);
        for (hess, jac) in [
            (mt.hessian(&x, &p).unwrap(), fd_jacobian(|q| mt.score(&x, q), &p, h_step).unwrap()),
            (ma.hessian(&x, &p).unwrap(), fd_jacobian(|q| ma.score(&x, q), &p, h_step).unwrap()),
        ] {
            assert!((&hess - &jac).norm() < 1e-5 * hess.norm().max(1.0));
        }
    }

    #[test]
    fn white_noise_limit_agrees_with_assumed_model() {
        let mt = DoaTrue::new(7, 0.3, 0.0).unwrap();
        let ma = DoaAssumed::new(7, 0.3).unwrap();
        let x = snapshot(7);
        let p = params();
        let lt = mt.log_pdf(&x, &p).unwrap();
        let la = ma.log_pdf(&x, &p).unwrap();
        assert!((lt - la).abs() < 1e-12 * la.abs());
        let st = mt.score(&x, &p).unwrap();
        let sa = ma.score(&x, &p).unwrap();
        assert!((&st - &sa).norm() < 1e-10 * sa.norm());
    }

    #[test]
    fn direction_outside_open_interval_rejected() {
        let m = DoaAssumed::new(4, 1.0).unwrap();
        let p = DVector::from_vec(vec![FRAC_PI_2, 1.0, 0.0]);
        assert!(matches!(m.log_pdf(&snapshot(4), &p), Err(Error::Domain(_))));
    }

    #[test]
    fn samples_reproduce_covariance_and_circularity() {
        let m = DoaTrue::new(4, 0.5, 0.6).unwrap();
        let p = params();
        let mu = match m.mean_observation(&p).unwrap() {
            Observation::Complex(v) => v,
            _ => unreachable!(),
        };
        let mut rng = RngStream::new(21, 0).rng();
        let n_draws = 40_000;
        let mut herm = MatrixAccumulator::new(1, 1); // Re E[v_0 conj(v_1)]
        let mut pseudo = MatrixAccumulator::new(1, 1); // Re E[v_0 v_1]
        for _ in 0..n_draws {
            let x = match m.sample(&p, &mut rng).unwrap() {
                Observation::Complex(v) => v,
                _ => unreachable!(),
            };
            let v = &x - &mu;
            herm.push(&DMatrix::from_element(1, 1, (v[0] * v[1].conj()).re));
            pseudo.push(&DMatrix::from_element(1, 1, (v[0] * v[1]).re));
        }
        let target = 0.5 * 0.6; // sigma2 * rho
        assert!((herm.mean()[(0, 0)] - target).abs() < 5.0 * herm.std_error()[(0, 0)]);
        assert!(pseudo.mean()[(0, 0)].abs() < 5.0 * pseudo.std_error()[(0, 0)]);
    }

    #[test]
    fn expected_score_vanishes_at_truth() {
        // Affine score: the expectation is the score at the mean snapshot.
        let m = DoaTrue::new(8, 0.1, 0.8).unwrap();
        let p = params();
        let mean = m.mean_observation(&p).unwrap();
        let s = m.score(&mean, &p).unwrap();
        assert!(s.norm() < 1e-12);
    }
}
