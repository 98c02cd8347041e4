//! Pointwise-equivalent model construction.
//!
//! Given a misspecified pair and its pseudo-true point, an auxiliary density
//! family is built by reweighting the true density with a function `g` of
//! the assumed-model likelihood ratio:
//!
//! ```text
//! p~(x; gamma) = g( f(x;gamma) / f(x;theta_star0) ) * p(x; theta0) / c(gamma)
//! ```
//!
//! At the operating point `gamma0 = theta_star0` the ratio is one, so the
//! family coincides with the true density there while its score becomes
//! proportional to the assumed score. Computing the projected ("naive")
//! bound through this family instead of the true model recovers the full
//! sandwich bound, which is what [`EquivalentModel::naive_mcrb_via_equivalent`]
//! demonstrates numerically.
//!
//! `g` must be twice differentiable, strictly positive, and satisfy
//! `g(1) = 1`, `g'(1) != 0`. Any positive multiple of a valid `g` yields the
//! identical family (the normalizer absorbs the constant), so candidates
//! with `g(1) != 1` should simply be divided by `g(1)`; [`GFunction::vuong`]
//! ships in that rescaled form.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

use crate::bounds::compute_naive_mcrb;
use crate::error::{Error, Result};
use crate::information::info_monte_carlo;
use crate::models::{DensityModel, MisspecifiedProblem, Observation};
use crate::numerics::{MatrixAccumulator, MonteCarloEstimate, RngStream, SymMatrix};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A reweighting function for the equivalent-model construction.
#[derive(Clone)]
pub struct GFunction {
    name: String,
    g: ScalarFn,
    g_prime: ScalarFn,
    dg_at_1: f64,
}

impl fmt::Debug for GFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GFunction")
            .field("name", &self.name)
            .field("dg_at_1", &self.dg_at_1)
            .finish()
    }
}

impl GFunction {
    /// Validated constructor: checks `g(1) = 1` (to 1e-14), `g'(1) != 0`,
    /// agreement of `g_prime` with a finite difference of `g` at 1 (to 1e-8),
    /// and strict positivity on a probe grid.
    pub fn new(
        name: impl Into<String>,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let name = name.into();
        let g_at_1 = g(1.0);
        if (g_at_1 - 1.0).abs() > 1e-14 {
            return Err(Error::InvalidInput(format!(
                "g(1) must equal 1 (got {g_at_1}); rescale g by 1/g(1) — the construction \
                 is invariant under constant factors"
            )));
        }
        let dg_at_1 = g_prime(1.0);
        if !dg_at_1.is_finite() || dg_at_1 == 0.0 {
            return Err(Error::InvalidInput("g'(1) must be finite and nonzero".into()));
        }
        let h = 1e-6;
        let fd = (g(1.0 + h) - g(1.0 - h)) / (2.0 * h);
        if (fd - dg_at_1).abs() > 1e-8 * dg_at_1.abs().max(1.0) {
            return Err(Error::InvalidInput(format!(
                "g_prime(1) = {dg_at_1} disagrees with a finite difference of g ({fd})"
            )));
        }
        for &z in &[1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0, 1e3] {
            let v = g(z);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "g must be strictly positive; g({z}) = {v}"
                )));
            }
        }
        Ok(Self { name, g: Arc::new(g), g_prime: Arc::new(g_prime), dg_at_1 })
    }

    /// `g(z) = z`: reweights by the likelihood ratio itself.
    pub fn identity() -> Self {
        Self::new("identity_g", |z| z, |_| 1.0).expect("identity g-function is valid")
    }

    /// Vuong's auxiliary function `1 + exp(1 - z)`, divided by its value at 1
    /// so that `g(1) = 1` holds; the division leaves the constructed family
    /// unchanged. `g'(1) = -1/2`.
    pub fn vuong() -> Self {
        Self::new(
            "vuong_g",
            |z| 0.5 * (1.0 + (1.0 - z).exp()),
            |z| -0.5 * (1.0 - z).exp(),
        )
        .expect("vuong g-function is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, z: f64) -> Result<f64> {
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::Domain(format!("g is defined on positive reals, got {z}")));
        }
        let v = (self.g)(z);
        if !v.is_finite() {
            return Err(Error::Evaluation(format!("g({z}) is not finite")));
        }
        Ok(v)
    }

    pub fn derivative(&self, z: f64) -> f64 {
        (self.g_prime)(z)
    }

    /// Cached `g'(1)`, the proportionality constant of the equivalent score.
    pub fn derivative_at_one(&self) -> f64 {
        self.dg_at_1
    }
}

type CacheKey = (Vec<u64>, usize, u64, u64);

/// Result of fitting a linear map between two score families.
#[derive(Debug, Clone)]
pub struct ProportionalScoreFit {
    /// Least-squares `w` with `score_to ~ w * score_from`.
    pub w_matrix: DMatrix<f64>,
    /// Largest per-sample residual norm of the fit.
    pub max_residual: f64,
}

/// The equivalent family built from a base pair, a g-function, and the
/// pseudo-true operating point.
#[derive(Debug)]
pub struct EquivalentModel {
    base: MisspecifiedProblem,
    gfun: GFunction,
    theta_star0: DVector<f64>,
    normalizer_cache: Mutex<HashMap<CacheKey, MonteCarloEstimate>>,
}

impl EquivalentModel {
    pub fn new(
        base: MisspecifiedProblem,
        gfun: GFunction,
        theta_star0: DVector<f64>,
    ) -> Result<Self> {
        if theta_star0.len() != base.assumed_param_dim() {
            return Err(Error::DimensionMismatch {
                expected: base.assumed_param_dim(),
                got: theta_star0.len(),
            });
        }
        if theta_star0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("operating point must be finite".into()));
        }
        Ok(Self { base, gfun, theta_star0, normalizer_cache: Mutex::new(HashMap::new()) })
    }

    pub fn base(&self) -> &MisspecifiedProblem {
        &self.base
    }

    pub fn gfun(&self) -> &GFunction {
        &self.gfun
    }

    pub fn theta_star0(&self) -> &DVector<f64> {
        &self.theta_star0
    }

    fn log_ratio(&self, x: &Observation, gamma: &DVector<f64>) -> Result<f64> {
        let f = self.base.assumed_model.as_ref();
        Ok(f.log_pdf(x, gamma)? - f.log_pdf(x, &self.theta_star0)?)
    }

    /// `r(x; gamma) = f(x;gamma) / f(x;theta_star0)`, computed in log space.
    pub fn likelihood_ratio(&self, x: &Observation, gamma: &DVector<f64>) -> Result<f64> {
        Ok(self.log_ratio(x, gamma)?.exp())
    }

    /// Monte Carlo estimate of the normalizer `c(gamma) = E_p[g(r(x;gamma))]`.
    ///
    /// At the operating point the ratio is identically one and `g(1) = 1`,
    /// so the exact value 1 is returned without sampling. Estimates are
    /// cached by `(gamma, n, stream)`.
    pub fn normalizer(
        &self,
        gamma: &DVector<f64>,
        n: usize,
        stream: RngStream,
    ) -> Result<MonteCarloEstimate> {
        if gamma.len() != self.theta_star0.len() {
            return Err(Error::DimensionMismatch {
                expected: self.theta_star0.len(),
                got: gamma.len(),
            });
        }
        if gamma == &self.theta_star0 {
            return Ok(MonteCarloEstimate { value: 1.0, std_error: 0.0, n_samples: n });
        }
        if n < 2 {
            return Err(Error::InvalidInput("need at least 2 samples".into()));
        }
        let key: CacheKey = (
            gamma.iter().map(|v| v.to_bits()).collect(),
            n,
            stream.seed,
            stream.stream_id,
        );
        if let Some(hit) = self.normalizer_cache.lock().unwrap().get(&key) {
            return Ok(*hit);
        }
        let mut rng = stream.rng();
        let mut acc = MatrixAccumulator::new(1, 1);
        for _ in 0..n {
            let x = self.base.true_model.sample(&self.base.theta0, &mut rng)?;
            let g = self.gfun.eval(self.likelihood_ratio(&x, gamma)?)?;
            acc.push(&DMatrix::from_element(1, 1, g));
        }
        let est = MonteCarloEstimate {
            value: acc.mean()[(0, 0)],
            std_error: acc.std_error()[(0, 0)],
            n_samples: n,
        };
        self.normalizer_cache.lock().unwrap().insert(key, est);
        Ok(est)
    }

    /// `log p~(x; gamma)` given a (positive) normalizer value.
    pub fn log_pdf_equivalent(
        &self,
        x: &Observation,
        gamma: &DVector<f64>,
        c_value: f64,
    ) -> Result<f64> {
        if !(c_value.is_finite() && c_value > 0.0) {
            return Err(Error::InvalidInput(format!("normalizer must be > 0, got {c_value}")));
        }
        let g = self.gfun.eval(self.likelihood_ratio(x, gamma)?)?;
        if g <= 0.0 {
            return Err(Error::Domain("g evaluated to a non-positive value".into()));
        }
        let log_p = self.base.true_model.log_pdf(x, &self.base.theta0)?;
        Ok(g.ln() + log_p - c_value.ln())
    }

    /// Score of the equivalent family at the operating point:
    /// `g'(1) * score_f(x; theta_star0)`. The normalizer's log-gradient
    /// vanishes there (the assumed score has zero mean at the pseudo-true
    /// point), so it is omitted exactly rather than estimated.
    pub fn equivalent_score_at_base(&self, x: &Observation) -> Result<DVector<f64>> {
        let s = self.base.assumed_model.score(x, &self.theta_star0)?;
        Ok(s.scale(self.gfun.derivative_at_one()))
    }

    /// Fits `w` with `assumed_score ~ w * equivalent_score` over random
    /// draws; for this construction the fit is `(1/g'(1)) I` with vanishing
    /// residual.
    pub fn verify_proportional_score(
        &self,
        n_probe: usize,
        stream: RngStream,
    ) -> Result<ProportionalScoreFit> {
        let n2 = self.theta_star0.len();
        if n_probe < n2 {
            return Err(Error::InvalidInput(format!(
                "need at least {n2} probe draws, got {n_probe}"
            )));
        }
        let mut n_probe = n_probe;
        let mut attempt = 0;
        loop {
            let mut rng = stream.rng();
            let mut from = Vec::with_capacity(n_probe);
            let mut to = Vec::with_capacity(n_probe);
            for _ in 0..n_probe {
                let x = self.base.true_model.sample(&self.base.theta0, &mut rng)?;
                from.push(self.equivalent_score_at_base(&x)?);
                to.push(self.base.assumed_model.score(&x, &self.theta_star0)?);
            }
            match fit_proportional_score(&from, &to) {
                Ok(fit) => return Ok(fit),
                Err(e) if attempt < 2 => {
                    // Rank-deficient probe set: retry with more draws.
                    let _ = e;
                    attempt += 1;
                    n_probe *= 2;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Wraps the family at the operating point as a sampleable true model, so
    /// the pseudo-true solver and the information-matrix machinery can run
    /// against it unchanged. Density and score are only defined at the
    /// operating point itself.
    pub fn equivalent_problem(&self) -> Result<MisspecifiedProblem> {
        let wrapper = Arc::new(OperatingPointModel {
            base_true: self.base.true_model.clone(),
            base_assumed: self.base.assumed_model.clone(),
            theta0: self.base.theta0.clone(),
            theta_star0: self.theta_star0.clone(),
            gfun: self.gfun.clone(),
        });
        MisspecifiedProblem::new(
            wrapper,
            self.base.assumed_model.clone(),
            self.theta_star0.clone(),
        )
    }

    /// Projected bound computed with the equivalent family playing the role
    /// of the true model. Returns the estimate and per-entry standard errors
    /// from `n_batches` independent replicates; the result reproduces the
    /// full sandwich bound of the base pair.
    pub fn naive_mcrb_via_equivalent(
        &self,
        n_samples: usize,
        n_batches: usize,
        stream: RngStream,
    ) -> Result<(SymMatrix, DMatrix<f64>)> {
        if n_batches < 2 || n_samples < 2 * n_batches {
            return Err(Error::InvalidInput(
                "need at least 2 batches and 2 samples per batch".into(),
            ));
        }
        let problem = self.equivalent_problem()?;
        let per_batch = n_samples / n_batches;
        let n2 = self.theta_star0.len();
        let mut acc = MatrixAccumulator::new(n2, n2);
        for b in 0..n_batches {
            let info = info_monte_carlo(
                &problem,
                &self.theta_star0,
                per_batch,
                stream.substream(b as u64),
            )?;
            acc.push(compute_naive_mcrb(&info)?.as_matrix());
        }
        Ok((SymMatrix::symmetrize(acc.mean())?, acc.std_error()))
    }
}

/// Least-squares fit of `to_i ~ w * from_i` with the largest per-sample
/// residual norm. Errors when the `from` scores do not span the space.
pub fn fit_proportional_score(
    from: &[DVector<f64>],
    to: &[DVector<f64>],
) -> Result<ProportionalScoreFit> {
    if from.is_empty() || from.len() != to.len() {
        return Err(Error::InvalidInput("score sets must be non-empty and equal length".into()));
    }
    let d = from[0].len();
    let mut gram = DMatrix::zeros(d, d);
    let mut cross = DMatrix::zeros(d, d);
    for (e, s) in from.iter().zip(to) {
        gram += e * e.transpose();
        cross += s * e.transpose();
    }
    let gram = SymMatrix::symmetrize(&gram)?;
    if gram.condition_number() > crate::numerics::MAX_CONDITION_NUMBER {
        return Err(Error::Conditioning("probe scores are rank deficient".into()));
    }
    // w gram = cross  =>  w = (gram^{-1} cross^T)^T.
    let w = gram.solve(&cross.transpose())?.transpose();
    let mut max_residual = 0.0f64;
    for (e, s) in from.iter().zip(to) {
        max_residual = max_residual.max((s - &w * e).norm());
    }
    Ok(ProportionalScoreFit { w_matrix: w, max_residual })
}

/// The equivalent family pinned to its operating point, exposed as a
/// sampleable [`DensityModel`]. There it coincides with the true density, and
/// its score is the rescaled assumed score.
struct OperatingPointModel {
    base_true: Arc<dyn DensityModel>,
    base_assumed: Arc<dyn DensityModel>,
    theta0: DVector<f64>,
    theta_star0: DVector<f64>,
    gfun: GFunction,
}

impl fmt::Debug for OperatingPointModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatingPointModel").field("gfun", &self.gfun).finish()
    }
}

impl OperatingPointModel {
    fn require_operating_point(&self, params: &DVector<f64>) -> Result<()> {
        if params == &self.theta_star0 {
            Ok(())
        } else {
            Err(Error::Capability(
                "the equivalent family is only evaluable at its operating point".into(),
            ))
        }
    }
}

impl DensityModel for OperatingPointModel {
    fn param_dim(&self) -> usize {
        self.theta_star0.len()
    }

    fn obs_dim(&self) -> usize {
        self.base_true.obs_dim()
    }

    fn log_pdf(&self, x: &Observation, params: &DVector<f64>) -> Result<f64> {
        self.require_operating_point(params)?;
        // r(x; gamma0) = 1 and g(1) = 1, so this is the true log-density.
        self.base_true.log_pdf(x, &self.theta0)
    }

    fn score(&self, x: &Observation, params: &DVector<f64>) -> Result<DVector<f64>> {
        self.require_operating_point(params)?;
        let s = self.base_assumed.score(x, &self.theta_star0)?;
        Ok(s.scale(self.gfun.derivative_at_one()))
    }

    fn has_analytic_score(&self) -> bool {
        true
    }

    fn can_sample(&self) -> bool {
        self.base_true.can_sample()
    }

    fn sample(&self, params: &DVector<f64>, rng: &mut ChaCha8Rng) -> Result<Observation> {
        self.require_operating_point(params)?;
        self.base_true.sample(&self.theta0, rng)
    }

    fn is_complex(&self) -> bool {
        self.base_true.is_complex()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::compute_mcrb;
    use crate::information::info_analytic;
    use crate::models::{box1_problem, box3_problem};
    use crate::pseudo_true::{solve_pseudo_true, ExpectationMethod, PseudoTrueOptions};

    fn box1_equivalent(g: GFunction) -> EquivalentModel {
        let p = box1_problem(4, 1.0, 0.1, 0.5).unwrap();
        let theta_star0 = p.theta0.clone();
        EquivalentModel::new(p, g, theta_star0).unwrap()
    }

    /// Scalar case with N = 1: true N(theta0, eps), assumed N(theta, s2).
    fn scalar_equivalent() -> EquivalentModel {
        let p = box1_problem(1, 1.0, 0.1, 0.5).unwrap();
        let theta_star0 = p.theta0.clone();
        EquivalentModel::new(p, GFunction::identity(), theta_star0).unwrap()
    }

    #[test]
    fn g_validation_rejects_bad_functions() {
        assert!(GFunction::new("off_by_scale", |z| 2.0 * z, |_| 2.0).is_err()); // g(1) = 2
        assert!(GFunction::new("flat", |_| 1.0, |_| 0.0).is_err()); // g'(1) = 0
        assert!(GFunction::new("wrong_deriv", |z| z, |_| 2.0).is_err()); // fd mismatch
        assert!(GFunction::new("negative", |z| 2.0 * z - 1.0, |_| 2.0).is_err()); // g(0.1) < 0
    }

    #[test]
    fn builtin_g_functions() {
        let id = GFunction::identity();
        assert_eq!(id.derivative_at_one(), 1.0);
        let v = GFunction::vuong();
        assert!((v.derivative_at_one() + 0.5).abs() < 1e-15);
        assert!((v.eval(1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn likelihood_ratio_examples() {
        // Scalar standard normal assumed model, theta_star0 = 0:
        // r(0; 1) = f(0;1)/f(0;0) = exp(-1/2).
        let p = box1_problem(1, 1.0, 0.1, 0.0).unwrap();
        let eq = EquivalentModel::new(p, GFunction::identity(), DVector::zeros(1)).unwrap();
        let x = Observation::Real(DVector::zeros(1));
        let r = eq.likelihood_ratio(&x, &DVector::from_element(1, 1.0)).unwrap();
        assert!((r - (-0.5f64).exp()).abs() < 1e-14);
        assert_eq!(eq.likelihood_ratio(&x, &DVector::zeros(1)).unwrap(), 1.0);
    }

    #[test]
    fn normalizer_exact_at_operating_point() {
        for g in [GFunction::identity(), GFunction::vuong()] {
            let eq = box1_equivalent(g);
            let est = eq.normalizer(eq.theta_star0(), 100, RngStream::new(1, 0)).unwrap();
            assert_eq!(est.value, 1.0);
            assert_eq!(est.std_error, 0.0);
        }
    }

    #[test]
    fn normalizer_matches_gaussian_tilt_oracle() {
        // identity g, scalar case: c(gamma) has a closed form via the
        // moment-generating function of the true normal.
        let eq = scalar_equivalent();
        let (theta0, eps, s2): (f64, f64, f64) = (0.5, 0.1, 1.0);
        let gamma = DVector::from_element(1, 1.1);
        let t = (gamma[0] - theta0) / s2;
        let exact = (-(gamma[0] * gamma[0] - theta0 * theta0) / (2.0 * s2)).exp()
            * (t * theta0 + 0.5 * t * t * eps).exp();
        let est = eq.normalizer(&gamma, 200_000, RngStream::new(2, 0)).unwrap();
        assert!(
            (est.value - exact).abs() < 5.0 * est.std_error,
            "c = {} vs exact {exact} (se {})",
            est.value,
            est.std_error
        );
    }

    #[test]
    fn normalizer_error_shrinks_with_sample_size() {
        let eq = box1_equivalent(GFunction::vuong());
        let gamma = DVector::from_element(1, 0.9);
        let a = eq.normalizer(&gamma, 20_000, RngStream::new(3, 0)).unwrap();
        let b = eq.normalizer(&gamma, 40_000, RngStream::new(3, 1)).unwrap();
        let ratio = a.std_error / b.std_error;
        assert!((ratio - 2f64.sqrt()).abs() < 0.2 * 2f64.sqrt(), "ratio {ratio}");
    }

    #[test]
    fn normalizer_is_cached_and_deterministic() {
        let eq = box1_equivalent(GFunction::identity());
        let gamma = DVector::from_element(1, 0.8);
        let a = eq.normalizer(&gamma, 5_000, RngStream::new(4, 0)).unwrap();
        let b = eq.normalizer(&gamma, 5_000, RngStream::new(4, 0)).unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn pointwise_equivalence_at_operating_point() {
        for g in [GFunction::identity(), GFunction::vuong()] {
            let eq = box1_equivalent(g);
            let mut rng = RngStream::new(5, 0).rng();
            for _ in 0..100 {
                let x = eq.base().true_model.sample(&eq.base().theta0, &mut rng).unwrap();
                let lp_eq = eq.log_pdf_equivalent(&x, eq.theta_star0(), 1.0).unwrap();
                let lp = eq.base().true_model.log_pdf(&x, &eq.base().theta0).unwrap();
                assert_eq!(lp_eq, lp);
            }
        }
    }

    #[test]
    fn tilted_density_matches_hand_derived_normal() {
        // identity g, scalar case: the equivalent density at gamma is the
        // exponential tilt of N(theta0, eps), i.e. N(theta0 + t*eps, eps)
        // with t = (gamma - theta_star0)/s2.
        let eq = scalar_equivalent();
        let (theta0, eps, s2): (f64, f64, f64) = (0.5, 0.1, 1.0);
        let gamma = DVector::from_element(1, 1.3);
        let t = (gamma[0] - theta0) / s2;
        let c = (-(gamma[0] * gamma[0] - theta0 * theta0) / (2.0 * s2)).exp()
            * (t * theta0 + 0.5 * t * t * eps).exp();
        for &xv in &[-0.5, 0.1, 0.5, 0.9, 1.6] {
            let x = Observation::Real(DVector::from_element(1, xv));
            let lp = eq.log_pdf_equivalent(&x, &gamma, c).unwrap();
            let mean = theta0 + t * eps;
            let exact = -0.5 * ((2.0 * std::f64::consts::PI * eps).ln())
                - (xv - mean) * (xv - mean) / (2.0 * eps);
            assert!((lp - exact).abs() < 1e-12, "x = {xv}: {lp} vs {exact}");
        }
    }

    #[test]
    fn equivalent_density_integrates_to_one() {
        // Importance check E_p[g(r)/c] = 1 for a randomized gamma.
        let eq = box1_equivalent(GFunction::vuong());
        let gamma = DVector::from_element(1, 0.95);
        let n = 50_000;
        let c = eq.normalizer(&gamma, n, RngStream::new(6, 0)).unwrap();
        let mut rng = RngStream::new(6, 1).rng();
        let mut acc = MatrixAccumulator::new(1, 1);
        for _ in 0..n {
            let x = eq.base().true_model.sample(&eq.base().theta0, &mut rng).unwrap();
            let g = eq.gfun().eval(eq.likelihood_ratio(&x, &gamma).unwrap()).unwrap();
            acc.push(&DMatrix::from_element(1, 1, g / c.value));
        }
        let se = acc.std_error()[(0, 0)].hypot(c.std_error / c.value);
        assert!((acc.mean()[(0, 0)] - 1.0).abs() < 5.0 * se);
    }

    #[test]
    fn score_at_base_is_rescaled_assumed_score() {
        let mut rng = RngStream::new(7, 0).rng();
        for (g, factor) in [(GFunction::identity(), 1.0), (GFunction::vuong(), -0.5)] {
            let eq = box1_equivalent(g);
            for _ in 0..50 {
                let x = eq.base().true_model.sample(&eq.base().theta0, &mut rng).unwrap();
                let e = eq.equivalent_score_at_base(&x).unwrap();
                let s = eq.base().assumed_model.score(&x, eq.theta_star0()).unwrap();
                assert!((e[0] - factor * s[0]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn score_at_base_matches_finite_difference_of_log_density() {
        // Central difference in gamma with Monte Carlo normalizers sharing
        // one stream (common random numbers keeps the difference smooth).
        let eq = box1_equivalent(GFunction::identity());
        let x = Observation::Real(DVector::from_vec(vec![0.6, 0.2, 0.9, 0.4]));
        let h = 1e-4;
        let n = 50_000;
        let stream = RngStream::new(8, 0);
        let gp = DVector::from_element(1, 0.5 + h);
        let gm = DVector::from_element(1, 0.5 - h);
        let cp = eq.normalizer(&gp, n, stream).unwrap();
        let cm = eq.normalizer(&gm, n, stream).unwrap();
        let fd = (eq.log_pdf_equivalent(&x, &gp, cp.value).unwrap()
            - eq.log_pdf_equivalent(&x, &gm, cm.value).unwrap())
            / (2.0 * h);
        let analytic = eq.equivalent_score_at_base(&x).unwrap()[0];
        // Worst-case error budget: uncorrelated normalizer noise plus the
        // O(h^2) truncation term; common random numbers do far better.
        let budget = 5.0 * (cp.std_error / cp.value).hypot(cm.std_error / cm.value) / (2.0 * h)
            + 1e-3;
        assert!((fd - analytic).abs() < budget, "fd {fd} vs {analytic} (budget {budget})");
    }

    #[test]
    fn proportional_score_fit_recovers_reciprocal_slope() {
        for (g, w) in [(GFunction::identity(), 1.0), (GFunction::vuong(), -2.0)] {
            let eq = box1_equivalent(g);
            let fit = eq.verify_proportional_score(64, RngStream::new(9, 0)).unwrap();
            assert!((fit.w_matrix[(0, 0)] - w).abs() < 1e-12);
            assert!(fit.max_residual < 1e-12);
        }
    }

    #[test]
    fn proportional_fit_between_true_and_assumed_scores() {
        // White/white pair: the true score is (s2/s1^2) times the assumed
        // one, so the fitted slope from true to assumed is s1^2/s2^2.
        let p = box3_problem(5, 2.0, 1.0, 0.3).unwrap();
        let mut rng = RngStream::new(10, 0).rng();
        let mut from = Vec::new();
        let mut to = Vec::new();
        for _ in 0..32 {
            let x = p.true_model.sample(&p.theta0, &mut rng).unwrap();
            from.push(p.true_model.score(&x, &p.theta0).unwrap());
            to.push(p.assumed_model.score(&x, &p.theta0).unwrap());
        }
        let fit = fit_proportional_score(&from, &to).unwrap();
        assert!((fit.w_matrix[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(fit.max_residual < 1e-12);
    }

    #[test]
    fn pseudo_true_is_invariant_under_the_equivalent_family() {
        let eq = box1_equivalent(GFunction::vuong());
        let problem = eq.equivalent_problem().unwrap();
        let opts = PseudoTrueOptions {
            method: ExpectationMethod::SampleAverage {
                n_samples: 20_000,
                stream: RngStream::new(11, 0),
            },
            ..Default::default()
        };
        let sol = solve_pseudo_true(&problem, &opts).unwrap();
        // Sampling noise of the per-draw mean is sqrt(3.1/16).
        let se = (3.1 / 16.0 / 20_000f64).sqrt();
        assert!((sol.theta_star[0] - 0.5).abs() < 5.0 * se);
    }

    #[test]
    fn projected_bound_through_the_family_recovers_the_sandwich_bound() {
        let base = box1_problem(4, 1.0, 0.1, 0.5).unwrap();
        let info = info_analytic(&base, &base.theta0).unwrap();
        let mcrb = compute_mcrb(&info).unwrap().as_matrix()[(0, 0)];
        for g in [GFunction::identity(), GFunction::vuong()] {
            let eq = box1_equivalent(g);
            let (est, se) =
                eq.naive_mcrb_via_equivalent(40_000, 10, RngStream::new(12, 0)).unwrap();
            assert!(
                (est.as_matrix()[(0, 0)] - mcrb).abs() < 5.0 * se[(0, 0)],
                "{} vs {mcrb} (se {})",
                est.as_matrix()[(0, 0)],
                se[(0, 0)]
            );
        }
    }

    #[test]
    fn family_refuses_evaluation_away_from_operating_point() {
        let eq = box1_equivalent(GFunction::identity());
        let problem = eq.equivalent_problem().unwrap();
        let x = Observation::Real(DVector::zeros(4));
        assert!(matches!(
            problem.true_model.log_pdf(&x, &DVector::from_element(1, 0.9)),
            Err(Error::Capability(_))
        ));
    }
}
