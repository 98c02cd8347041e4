//! Estimators and Monte Carlo trial machinery.
//!
//! Three estimator families:
//!
//! * the maximizer of the assumed likelihood ([`mml_estimator`]) — closed
//!   form for the Gaussian mean pairs, grid-plus-Newton beam search for DOA;
//! * the maximizer of the true likelihood ([`oracle_ml_estimator`]), which
//!   needs the true covariance and serves as the oracle baseline;
//! * the first-coordinate estimator ([`first_sample_estimator`]), pointwise
//!   unbiased yet capable of beating the sandwich bound — the counterexample
//!   that motivates the revised unbiasedness conditions.
//!
//! [`run_trials`] draws independent observations, applies an estimator, and
//! accumulates the empirical MSE about the pseudo-true point together with
//! three bias diagnostics:
//!
//! * regular bias `E[est - theta_star]`,
//! * score bias `E[(est - theta_star) score_f^T] - a^{-1} b` (the local
//!   condition under which the sandwich bound is valid),
//! * true-score bias `E[(est - theta_star) score_p^T] - a^{-1} b_pf` (the
//!   local condition behind the projected bound).
//!
//! Trials run in parallel over per-trial substreams and are accumulated in
//! stream order, so results are bit-identical for a fixed `(seed, stream)`
//! regardless of thread count.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::bounds::BoundReport;
use crate::error::{Error, Result};
use crate::information::InformationSet;
use crate::models::{
    BuiltinSpec, DoaTrue, MisspecifiedProblem, Observation, SteeringArray,
};
use crate::numerics::{fd_step, MatrixAccumulator, RngStream, SymMatrix};

/// What parameter an estimator is built to recover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorTarget {
    PseudoTrue,
    TrueParam,
}

type EstimatorFn = Arc<dyn Fn(&Observation) -> Result<DVector<f64>> + Send + Sync>;

/// A named deterministic map from observations to parameter estimates.
#[derive(Clone)]
pub struct Estimator {
    pub name: String,
    pub target: EstimatorTarget,
    map: EstimatorFn,
}

impl std::fmt::Debug for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Estimator")
            .field("name", &self.name)
            .field("target", &self.target)
            .finish()
    }
}

impl Estimator {
    pub fn new(
        name: impl Into<String>,
        target: EstimatorTarget,
        map: impl Fn(&Observation) -> Result<DVector<f64>> + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), target, map: Arc::new(map) }
    }

    pub fn estimate(&self, x: &Observation) -> Result<DVector<f64>> {
        (self.map)(x)
    }
}

/// Maximum-likelihood estimator under the assumed model.
///
/// Gaussian mean pairs reduce to a weighted average of the observation; the
/// DOA pair uses a 512-point beam scan over the open direction interval
/// followed by Newton refinement of `|a(phi)^H x|^2`, then the linear source
/// estimate `s = a(phi)^H x / M`.
pub fn mml_estimator(problem: &MisspecifiedProblem) -> Result<Estimator> {
    match &problem.builtin {
        Some(BuiltinSpec::RealMean { .. }) | Some(BuiltinSpec::CorrectlySpecified { .. }) => {
            let cov = problem.assumed_model.cov_matrix().ok_or_else(|| {
                Error::Capability("assumed model does not expose a covariance".into())
            })?;
            Ok(weighted_mean_estimator("mml", EstimatorTarget::PseudoTrue, &cov)?)
        }
        Some(BuiltinSpec::Doa { m, .. }) => {
            let arr = SteeringArray::new(*m)?;
            Ok(Estimator::new("mml", EstimatorTarget::PseudoTrue, move |x: &Observation| {
                let x = x.as_complex()?.clone();
                // Beam objective |a^H x|^2 and its phi-derivatives via the
                // steering derivatives.
                let eval = |phi: f64| {
                    let c = arr.steering(phi).dotc(&x);
                    c.norm_sqr()
                };
                let derivs = |phi: f64| {
                    let c = arr.steering(phi).dotc(&x);
                    let c1 = arr.steering_d1(phi).dotc(&x);
                    let c2 = arr.steering_d2(phi).dotc(&x);
                    let j1 = 2.0 * (c.conj() * c1).re;
                    let j2 = 2.0 * c1.norm_sqr() + 2.0 * (c.conj() * c2).re;
                    (j1, j2)
                };
                let phi = maximize_on_interval(&eval, &derivs)?;
                let s = arr.steering(phi).dotc(&x) / Complex64::from(arr.len() as f64);
                Ok(DVector::from_vec(vec![phi, s.re, s.im]))
            }))
        }
        None => Err(Error::Capability(
            "no maximum-likelihood solver for this assumed model".into(),
        )),
    }
}

/// Maximum-likelihood estimator under the true model (oracle: it sees the
/// true covariance). For DOA this is the whitened beamformer maximizing
/// `|a^H cov^{-1} x|^2 / (a^H cov^{-1} a)`.
pub fn oracle_ml_estimator(problem: &MisspecifiedProblem) -> Result<Estimator> {
    match &problem.builtin {
        Some(BuiltinSpec::RealMean { cov, .. }) => {
            Ok(weighted_mean_estimator("oracle_ml", EstimatorTarget::TrueParam, cov)?)
        }
        Some(BuiltinSpec::CorrectlySpecified { cov }) => {
            Ok(weighted_mean_estimator("oracle_ml", EstimatorTarget::TrueParam, cov)?)
        }
        Some(BuiltinSpec::Doa { m, sigma2, rho }) => {
            let model = DoaTrue::new(*m, *sigma2, *rho)?;
            let arr = SteeringArray::new(*m)?;
            Ok(Estimator::new("oracle_ml", EstimatorTarget::TrueParam, move |x: &Observation| {
                let u = model.solve_cov(x.as_complex()?); // cov^{-1} x
                let quad = |phi: f64| {
                    let a = arr.steering(phi);
                    let b = a.dotc(&u);
                    let d = a.dotc(&model.solve_cov(&a)).re;
                    (b, d)
                };
                let eval = |phi: f64| {
                    let (b, d) = quad(phi);
                    b.norm_sqr() / d
                };
                let derivs = |phi: f64| {
                    let a = arr.steering(phi);
                    let ad = arr.steering_d1(phi);
                    let b = a.dotc(&u);
                    let b1 = ad.dotc(&u);
                    let inv_a = model.solve_cov(&a);
                    let d = a.dotc(&inv_a).re;
                    let d1 = 2.0 * ad.dotc(&inv_a).re;
                    let j1 = (2.0 * (b.conj() * b1).re * d - b.norm_sqr() * d1) / (d * d);
                    // Second derivative by central difference of the first.
                    let h = fd_step(phi);
                    let j1_at = |q: f64| {
                        let a = arr.steering(q);
                        let ad = arr.steering_d1(q);
                        let b = a.dotc(&u);
                        let b1 = ad.dotc(&u);
                        let inv_a = model.solve_cov(&a);
                        let d = a.dotc(&inv_a).re;
                        let d1 = 2.0 * ad.dotc(&inv_a).re;
                        (2.0 * (b.conj() * b1).re * d - b.norm_sqr() * d1) / (d * d)
                    };
                    let j2 = (j1_at(phi + h) - j1_at(phi - h)) / (2.0 * h);
                    (j1, j2)
                };
                let phi = maximize_on_interval(&eval, &derivs)?;
                let (b, d) = quad(phi);
                let s = b / Complex64::from(d);
                Ok(DVector::from_vec(vec![phi, s.re, s.im]))
            }))
        }
        None => Err(Error::Capability("no oracle solver for this true model".into())),
    }
}

/// `x -> x_1`: pointwise unbiased for scalar mean problems, but not locally
/// unbiased in the score sense — the counterexample estimator.
pub fn first_sample_estimator() -> Estimator {
    Estimator::new("first_sample", EstimatorTarget::PseudoTrue, |x: &Observation| {
        Ok(DVector::from_element(1, x.as_real()?[0]))
    })
}

fn weighted_mean_estimator(
    name: &str,
    target: EstimatorTarget,
    cov: &DMatrix<f64>,
) -> Result<Estimator> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Decomposition("covariance not positive definite".into()))?;
    let ones = DVector::from_element(cov.nrows(), 1.0);
    let w = chol.solve(&ones);
    let denom = ones.dot(&w);
    let weights = w.unscale(denom);
    Ok(Estimator::new(name, target, move |x: &Observation| {
        Ok(DVector::from_element(1, weights.dot(x.as_real()?)))
    }))
}

/// 512-point scan of the open interval `(-pi/2, pi/2)` followed by up to 20
/// Newton steps on the scan winner; converged when the derivative falls
/// below `1e-10` relative to the objective scale.
fn maximize_on_interval(
    eval: &dyn Fn(f64) -> f64,
    derivs: &dyn Fn(f64) -> (f64, f64),
) -> Result<f64> {
    const GRID: usize = 512;
    let mut phi = 0.0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..GRID {
        let q = -FRAC_PI_2 + PI * (i as f64 + 0.5) / GRID as f64;
        let v = eval(q);
        if v > best {
            best = v;
            phi = q;
        }
    }
    let tol = 1e-10 * best.max(1.0);
    // Once the proposed move is below float resolution of the angle, the
    // objective can no longer distinguish candidates; treat that as converged.
    let step_floor = 1e-12 * (1.0 + phi.abs());
    for _ in 0..20 {
        let (j1, j2) = derivs(phi);
        if j1.abs() <= tol {
            return Ok(phi);
        }
        let mut step = if j2 < 0.0 { -j1 / j2 } else { j1.signum() * PI / GRID as f64 };
        if step.abs() <= step_floor {
            return Ok(phi);
        }
        // Keep inside the open interval and on an ascent path.
        let mut tries = 0;
        loop {
            let cand = phi + step;
            if cand > -FRAC_PI_2 && cand < FRAC_PI_2 && eval(cand) >= best {
                best = eval(cand);
                phi = cand;
                break;
            }
            step *= 0.5;
            tries += 1;
            if step.abs() <= step_floor || tries > 40 {
                // No ascent left at floating-point resolution.
                return Ok(phi);
            }
        }
    }
    let (j1, j2) = derivs(phi);
    if j1.abs() <= tol || (j2 < 0.0 && (j1 / j2).abs() <= step_floor) {
        Ok(phi)
    } else {
        Err(Error::Evaluation("direction refinement did not converge".into()))
    }
}

/// Monte Carlo summary of an estimator on a problem.
#[derive(Debug, Clone)]
pub struct TrialEnsemble {
    /// Estimates of the included trials, in trial order.
    pub estimates: Vec<DVector<f64>>,
    /// Mean outer product of `est - theta_star` (MSE about the pseudo-true
    /// point), with per-entry standard errors.
    pub empirical_mse: SymMatrix,
    pub mse_std_error: DMatrix<f64>,
    pub regular_bias: DVector<f64>,
    pub regular_bias_std_error: DVector<f64>,
    /// `mean[(est - theta_star) score_f^T] - a^{-1} b`.
    pub score_bias: DMatrix<f64>,
    pub score_bias_std_error: DMatrix<f64>,
    /// `mean[(est - theta_star) score_p^T] - a^{-1} b_pf`.
    pub true_score_bias: DMatrix<f64>,
    pub true_score_bias_std_error: DMatrix<f64>,
    /// Largest norm of the assumed score evaluated at the estimate; near
    /// zero iff every estimate solves the assumed likelihood equation.
    pub max_score_at_estimate: f64,
    pub n_trials: usize,
    pub n_excluded: usize,
    pub stream: RngStream,
}

struct TrialRow {
    est: DVector<f64>,
    diff: DVector<f64>,
    score_f: DVector<f64>,
    score_p: DVector<f64>,
    score_norm_at_est: f64,
}

/// Runs `n_trials` independent draws of the estimator.
///
/// Per-trial optimizer failures are excluded and counted; more than 1%
/// exclusions invalidate the ensemble. Results are deterministic in `stream`.
pub fn run_trials(
    problem: &MisspecifiedProblem,
    estimator: &Estimator,
    theta_star: &DVector<f64>,
    info: &InformationSet,
    n_trials: usize,
    stream: RngStream,
) -> Result<TrialEnsemble> {
    if n_trials < 2 {
        return Err(Error::InvalidInput("need at least 2 trials".into()));
    }
    if estimator.target == EstimatorTarget::TrueParam {
        // MSE is measured about the pseudo-true point, so an estimator of
        // the true parameter is only comparable when the two coincide.
        let scale = theta_star.norm().max(1.0);
        if theta_star.len() != problem.theta0.len()
            || (theta_star - &problem.theta0).norm() > 1e-8 * scale
        {
            return Err(Error::InvalidInput(
                "estimator targets the true parameter, but the pseudo-true point differs \
                 from it on this problem"
                    .into(),
            ));
        }
    }
    let ainv_b = info.a.solve(info.b.as_matrix())?;
    let ainv_bpf = info.a.solve(&info.b_pf)?;

    let rows: Vec<Result<Option<TrialRow>>> = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.substream(i as u64).rng();
            let x = problem.true_model.sample(&problem.theta0, &mut rng)?;
            let est = match estimator.estimate(&x) {
                Ok(e) => e,
                Err(Error::Evaluation(_)) => return Ok(None), // excluded trial
                Err(e) => return Err(e),
            };
            if est.len() != theta_star.len() {
                return Err(Error::DimensionMismatch {
                    expected: theta_star.len(),
                    got: est.len(),
                });
            }
            let score_f = problem.assumed_model.score(&x, theta_star)?;
            let score_p = problem.true_model.score(&x, &problem.theta0)?;
            let score_norm_at_est = if est.len() == problem.assumed_param_dim() {
                match problem.assumed_model.score(&x, &est) {
                    Ok(s) => s.norm(),
                    Err(_) => f64::INFINITY,
                }
            } else {
                f64::INFINITY
            };
            let diff = &est - theta_star;
            Ok(Some(TrialRow { est, diff, score_f, score_p, score_norm_at_est }))
        })
        .collect();

    let n2 = theta_star.len();
    let n1 = problem.true_param_dim();
    let mut acc_mse = MatrixAccumulator::new(n2, n2);
    let mut acc_bias = MatrixAccumulator::new(n2, 1);
    let mut acc_score = MatrixAccumulator::new(n2, n2);
    let mut acc_true_score = MatrixAccumulator::new(n2, n1);
    let mut estimates = Vec::new();
    let mut max_score_at_estimate = 0.0f64;
    let mut n_excluded = 0;
    for row in rows {
        match row? {
            None => n_excluded += 1,
            Some(r) => {
                acc_mse.push(&(&r.diff * r.diff.transpose()));
                acc_bias.push(&DMatrix::from_column_slice(n2, 1, r.diff.as_slice()));
                acc_score.push(&(&r.diff * r.score_f.transpose()));
                acc_true_score.push(&(&r.diff * r.score_p.transpose()));
                max_score_at_estimate = max_score_at_estimate.max(r.score_norm_at_est);
                estimates.push(r.est);
            }
        }
    }
    if n_excluded * 100 > n_trials {
        return Err(Error::EnsembleInvalid(format!(
            "{n_excluded} of {n_trials} trials excluded (cap is 1%)"
        )));
    }
    if acc_mse.len() < 2 {
        return Err(Error::EnsembleInvalid("fewer than 2 usable trials".into()));
    }
    Ok(TrialEnsemble {
        estimates,
        empirical_mse: SymMatrix::symmetrize(acc_mse.mean())?,
        mse_std_error: acc_mse.std_error(),
        regular_bias: DVector::from_column_slice(acc_bias.mean().as_slice()),
        regular_bias_std_error: DVector::from_column_slice(acc_bias.std_error().as_slice()),
        score_bias: acc_score.mean() - ainv_b,
        score_bias_std_error: acc_score.std_error(),
        true_score_bias: acc_true_score.mean() - ainv_bpf,
        true_score_bias_std_error: acc_true_score.std_error(),
        max_score_at_estimate,
        n_trials,
        n_excluded,
        stream,
    })
}

/// Which unbiasedness definition to test against an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnbiasednessKind {
    /// Mean of the estimate equals the pseudo-true point.
    Pointwise,
    /// Pointwise plus the true-score coupling `E[diff score_p^T] = a^{-1} b_pf`.
    NaiveLocal,
    /// Pointwise plus the assumed-score coupling `E[diff score_f^T] = a^{-1} b`.
    RevisedLocal,
}

fn within(residual: f64, se: f64, z: f64) -> bool {
    residual.abs() <= z * se
}

/// Tests whether every residual of the requested condition is within
/// `z_threshold` standard errors of zero.
pub fn check_unbiasedness(
    ensemble: &TrialEnsemble,
    which: UnbiasednessKind,
    z_threshold: f64,
) -> Result<bool> {
    if z_threshold <= 0.0 {
        return Err(Error::InvalidInput("z threshold must be > 0".into()));
    }
    let pointwise = ensemble
        .regular_bias
        .iter()
        .zip(ensemble.regular_bias_std_error.iter())
        .all(|(&r, &se)| within(r, se, z_threshold));
    let matrix_ok = |res: &DMatrix<f64>, se: &DMatrix<f64>| {
        res.iter().zip(se.iter()).all(|(&r, &se)| within(r, se, z_threshold))
    };
    Ok(match which {
        UnbiasednessKind::Pointwise => pointwise,
        UnbiasednessKind::NaiveLocal => {
            pointwise && matrix_ok(&ensemble.true_score_bias, &ensemble.true_score_bias_std_error)
        }
        UnbiasednessKind::RevisedLocal => {
            pointwise && matrix_ok(&ensemble.score_bias, &ensemble.score_bias_std_error)
        }
    })
}

/// Verdict of [`check_efficiency`].
#[derive(Debug, Clone, Copy)]
pub struct EfficiencyReport {
    /// MSE diagonal matches the sandwich bound and the revised local
    /// unbiasedness conditions hold.
    pub attains_mcrb: bool,
    /// Every estimate solved the assumed likelihood equation (score at the
    /// estimate below tolerance).
    pub is_mml_consistent: bool,
}

/// Checks whether an ensemble attains the sandwich bound in the efficiency
/// sense, and whether its estimates satisfy the assumed likelihood equation.
pub fn check_efficiency(
    ensemble: &TrialEnsemble,
    report: &BoundReport,
    z_threshold: f64,
) -> Result<EfficiencyReport> {
    let mcrb = report.mcrb.as_matrix();
    if mcrb.nrows() != ensemble.empirical_mse.dim() {
        return Err(Error::DimensionMismatch {
            expected: mcrb.nrows(),
            got: ensemble.empirical_mse.dim(),
        });
    }
    let mse = ensemble.empirical_mse.as_matrix();
    let diag_ok = (0..mcrb.nrows()).all(|k| {
        within(mse[(k, k)] - mcrb[(k, k)], ensemble.mse_std_error[(k, k)], z_threshold)
    });
    let unbiased = check_unbiasedness(ensemble, UnbiasednessKind::RevisedLocal, z_threshold)?;
    Ok(EfficiencyReport {
        attains_mcrb: diag_ok && unbiased,
        is_mml_consistent: ensemble.max_score_at_estimate < 1e-6,
    })
}
