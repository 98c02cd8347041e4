//! Information matrices of a misspecified pair, evaluated at the pseudo-true
//! parameter.
//!
//! Four matrices drive every bound in the crate, all as expectations under
//! the true model `p` at its parameter `theta0`, with the assumed model `f`
//! evaluated at the pseudo-true point:
//!
//! * `a`    — negated expected Hessian of `log f`,
//! * `b`    — covariance of the assumed-model score,
//! * `b_pf` — cross-covariance of the assumed-model and true-model scores,
//! * `j_p`  — Fisher information of the true model at `theta0`.
//!
//! Built-in pairs get exact closed forms ([`info_analytic`]); anything else
//! falls back to sample averages with per-entry standard errors
//! ([`info_monte_carlo`]).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::{
    mean_jacobian, BuiltinSpec, DoaTrue, MisspecifiedProblem, SteeringArray,
};
use crate::numerics::{MatrixAccumulator, RngStream, SymMatrix};

/// How an [`InformationSet`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfoMethod {
    Analytic,
    MonteCarlo { n_samples: usize },
}

/// Per-entry standard errors for a Monte Carlo [`InformationSet`].
#[derive(Debug, Clone)]
pub struct InfoStdErrors {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub b_pf: DMatrix<f64>,
    pub j_p: DMatrix<f64>,
}

/// The information matrices of a (true, assumed) pair.
///
/// `a`, `b` are square in the assumed-parameter dimension; `j_p` is square in
/// the true-parameter dimension; `b_pf` is assumed-by-true rectangular.
#[derive(Debug, Clone)]
pub struct InformationSet {
    pub a: SymMatrix,
    pub b: SymMatrix,
    pub b_pf: DMatrix<f64>,
    pub j_p: SymMatrix,
    pub method: InfoMethod,
    pub std_errors: Option<InfoStdErrors>,
}

/// Closed-form information matrices for built-in pairs.
///
/// `theta_star` is the pseudo-true parameter; for every built-in pair the
/// assumed mean model contains the true mean, so it coincides with `theta0`
/// and the closed forms below are exact there.
pub fn info_analytic(
    problem: &MisspecifiedProblem,
    theta_star: &DVector<f64>,
) -> Result<InformationSet> {
    if theta_star.len() != problem.assumed_param_dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.assumed_param_dim(),
            got: theta_star.len(),
        });
    }
    match &problem.builtin {
        None => Err(Error::Capability(
            "no closed-form information matrices for this model pair; use the Monte Carlo path"
                .into(),
        )),
        Some(BuiltinSpec::RealMean { cov, assumed_var }) => {
            let n = cov.nrows() as f64;
            let chol = cov
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Decomposition("covariance not positive definite".into()))?;
            let ones = DVector::from_element(cov.nrows(), 1.0);
            // score_f = 1^T (x - theta 1) / s2, score_p = 1^T cov^{-1} (x - theta 1).
            let a = n / assumed_var;
            let b = (&ones.transpose() * cov * &ones)[(0, 0)] / (assumed_var * assumed_var);
            let j_p = ones.dot(&chol.solve(&ones));
            Ok(InformationSet {
                a: SymMatrix::scalar(a)?,
                b: SymMatrix::scalar(b)?,
                b_pf: DMatrix::from_element(1, 1, a),
                j_p: SymMatrix::scalar(j_p)?,
                method: InfoMethod::Analytic,
                std_errors: None,
            })
        }
        Some(BuiltinSpec::CorrectlySpecified { cov }) => {
            let chol = cov
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Decomposition("covariance not positive definite".into()))?;
            let ones = DVector::from_element(cov.nrows(), 1.0);
            let fim = ones.dot(&chol.solve(&ones));
            Ok(InformationSet {
                a: SymMatrix::scalar(fim)?,
                b: SymMatrix::scalar(fim)?,
                b_pf: DMatrix::from_element(1, 1, fim),
                j_p: SymMatrix::scalar(fim)?,
                method: InfoMethod::Analytic,
                std_errors: None,
            })
        }
        Some(BuiltinSpec::Doa { m, sigma2, rho }) => {
            doa_info(*m, *sigma2, *rho, theta_star)
        }
    }
}

/// DOA closed forms. With mean Jacobian columns `D = [a' s, a, j a]`:
/// `a = b_pf = (2/s2) Re{D^H D}`, `b = (2/s2^2) Re{D^H cov D}`,
/// `j_p = 2 Re{D^H cov^{-1} D}`.
fn doa_info(m: usize, sigma2: f64, rho: f64, theta_star: &DVector<f64>) -> Result<InformationSet> {
    let true_model = DoaTrue::new(m, sigma2, rho)?;
    let arr = SteeringArray::new(m)?;
    let d = mean_jacobian(&arr, theta_star)?;
    let cov = true_model.noise_cov();

    let mut g = DMatrix::zeros(3, 3); // Re{D^H D}
    let mut gc = DMatrix::zeros(3, 3); // Re{D^H cov D}
    let mut gi = DMatrix::zeros(3, 3); // Re{D^H cov^{-1} D}
    for l in 0..3 {
        let dl = &d[l];
        let re = cov * dl.map(|v| v.re);
        let im = cov * dl.map(|v| v.im);
        let cov_dl = DVector::from_fn(m, |i, _| num_complex::Complex64::new(re[i], im[i]));
        let inv_dl = true_model.solve_cov(dl);
        for k in 0..3 {
            g[(k, l)] = d[k].dotc(dl).re;
            gc[(k, l)] = d[k].dotc(&cov_dl).re;
            gi[(k, l)] = d[k].dotc(&inv_dl).re;
        }
    }
    let a = SymMatrix::symmetrize(&g.scale(2.0 / sigma2))?;
    Ok(InformationSet {
        b_pf: a.as_matrix().clone(),
        b: SymMatrix::symmetrize(&gc.scale(2.0 / (sigma2 * sigma2)))?,
        j_p: SymMatrix::symmetrize(&gi.scale(2.0))?,
        a,
        method: InfoMethod::Analytic,
        std_errors: None,
    })
}

/// Sample-average information matrices with per-entry standard errors.
///
/// Draws `n_samples` observations from the true model at `theta0` and
/// averages `-hessian_f`, `score_f score_f^T`, `score_f score_p^T`, and
/// `score_p score_p^T`. Deterministic in `(seed, stream_id)`.
pub fn info_monte_carlo(
    problem: &MisspecifiedProblem,
    theta_star: &DVector<f64>,
    n_samples: usize,
    stream: RngStream,
) -> Result<InformationSet> {
    if n_samples < 2 {
        return Err(Error::InvalidInput("need at least 2 Monte Carlo samples".into()));
    }
    if theta_star.len() != problem.assumed_param_dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.assumed_param_dim(),
            got: theta_star.len(),
        });
    }
    let n1 = problem.true_param_dim();
    let n2 = problem.assumed_param_dim();
    let mut acc_a = MatrixAccumulator::new(n2, n2);
    let mut acc_b = MatrixAccumulator::new(n2, n2);
    let mut acc_bpf = MatrixAccumulator::new(n2, n1);
    let mut acc_jp = MatrixAccumulator::new(n1, n1);
    let mut rng = stream.rng();
    for _ in 0..n_samples {
        let x = problem.true_model.sample(&problem.theta0, &mut rng)?;
        let sf = problem.assumed_model.score(&x, theta_star)?;
        let sp = problem.true_model.score(&x, &problem.theta0)?;
        let hf = problem.assumed_model.hessian(&x, theta_star)?;
        acc_a.push(&(-hf));
        acc_b.push(&(&sf * sf.transpose()));
        acc_bpf.push(&(&sf * sp.transpose()));
        acc_jp.push(&(&sp * sp.transpose()));
    }
    Ok(InformationSet {
        a: SymMatrix::symmetrize(acc_a.mean())?,
        b: SymMatrix::symmetrize(acc_b.mean())?,
        b_pf: acc_bpf.mean().clone(),
        j_p: SymMatrix::symmetrize(acc_jp.mean())?,
        method: InfoMethod::MonteCarlo { n_samples },
        std_errors: Some(InfoStdErrors {
            a: acc_a.std_error(),
            b: acc_b.std_error(),
            b_pf: acc_bpf.std_error(),
            j_p: acc_jp.std_error(),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{box1_problem, box3_problem, correctly_specified_problem, doa_problem};
    use crate::numerics::loewner_geq;
    use std::f64::consts::PI;

    fn doa_params() -> (f64, f64, f64) {
        let phi = PI / 8.0;
        (phi, (PI / 4.0).cos(), (PI / 4.0).sin())
    }

    #[test]
    fn box1_closed_values() {
        // N = 4, s2 = 1, eps = 0.1: a = 4, b = 3.1, b_pf = 4, j_p = 13.
        let p = box1_problem(4, 1.0, 0.1, 0.5).unwrap();
        let info = info_analytic(&p, &p.theta0).unwrap();
        assert!((info.a.as_matrix()[(0, 0)] - 4.0).abs() < 1e-12);
        assert!((info.b.as_matrix()[(0, 0)] - 3.1).abs() < 1e-12);
        assert!((info.b_pf[(0, 0)] - 4.0).abs() < 1e-12);
        assert!((info.j_p.as_matrix()[(0, 0)] - 13.0).abs() < 1e-10);
    }

    #[test]
    fn box3_closed_values() {
        // N = 5, s1^2 = 2, s2^2 = 1: a = 5, b = 10, b_pf = 5, j_p = 2.5.
        let p = box3_problem(5, 2.0, 1.0, -0.2).unwrap();
        let info = info_analytic(&p, &p.theta0).unwrap();
        assert!((info.a.as_matrix()[(0, 0)] - 5.0).abs() < 1e-12);
        assert!((info.b.as_matrix()[(0, 0)] - 10.0).abs() < 1e-12);
        assert!((info.b_pf[(0, 0)] - 5.0).abs() < 1e-12);
        assert!((info.j_p.as_matrix()[(0, 0)] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn correct_specification_collapses_everything() {
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0, 2.0]));
        let p = correctly_specified_problem(cov, 0.3).unwrap();
        let info = info_analytic(&p, &p.theta0).unwrap();
        let fim = 1.0 / 0.5 + 1.0 + 0.5;
        for v in [
            info.a.as_matrix()[(0, 0)],
            info.b.as_matrix()[(0, 0)],
            info.b_pf[(0, 0)],
            info.j_p.as_matrix()[(0, 0)],
        ] {
            assert!((v - fim).abs() < 1e-12);
        }
    }

    #[test]
    fn doa_white_noise_collapse() {
        // rho = 0 means the assumed model is correct: b = a and j_p = a.
        let (phi, sr, si) = doa_params();
        let p = doa_problem(8, 0.1, 0.0, phi, sr, si).unwrap();
        let info = info_analytic(&p, &p.theta0).unwrap();
        let a = info.a.as_matrix();
        assert!((info.b.as_matrix() - a).norm() < 1e-12 * a.norm());
        assert!((info.j_p.as_matrix() - a).norm() < 1e-12 * a.norm());
        assert!((&info.b_pf - a).norm() < 1e-12 * a.norm());
    }

    #[test]
    fn doa_a_matrix_structure() {
        // Centered array: a is diagonal with entries
        // (2/s2) [ |a'|^2 |s|^2, M, M ].
        let (phi, sr, si) = doa_params();
        let m = 8;
        let sigma2 = 0.1;
        let p = doa_problem(m, sigma2, 0.5, phi, sr, si).unwrap();
        let info = info_analytic(&p, &p.theta0).unwrap();
        let a = info.a.as_matrix();
        let arr = SteeringArray::new(m).unwrap();
        let s_sq = sr * sr + si * si;
        let expect = [
            2.0 / sigma2 * arr.d1_norm_squared(phi) * s_sq,
            2.0 / sigma2 * m as f64,
            2.0 / sigma2 * m as f64,
        ];
        for k in 0..3 {
            assert!((a[(k, k)] - expect[k]).abs() < 1e-10 * expect[k]);
            for l in 0..3 {
                if l != k {
                    assert!(a[(k, l)].abs() < 1e-10 * expect[0].max(expect[1]));
                }
            }
        }
    }

    #[test]
    fn score_covariance_dominates_its_projection() {
        // b >= b_pf j_p^{-1} b_pf^T (Cauchy-Schwarz for score vectors).
        let (phi, sr, si) = doa_params();
        let p = doa_problem(8, 0.1, 0.6, phi, sr, si).unwrap();
        let info = info_analytic(&p, &p.theta0).unwrap();
        let proj = &info.b_pf * info.j_p.solve(&info.b_pf.transpose()).unwrap();
        let proj = SymMatrix::symmetrize(&proj).unwrap();
        let scale = info.b.as_matrix().norm();
        assert!(loewner_geq(&info.b, &proj, 1e-8 * scale).unwrap());
    }

    #[test]
    fn monte_carlo_matches_analytic_box1() {
        let p = box1_problem(4, 1.0, 0.1, 0.5).unwrap();
        let exact = info_analytic(&p, &p.theta0).unwrap();
        let mc = info_monte_carlo(&p, &p.theta0, 40_000, RngStream::new(5, 0)).unwrap();
        let se = mc.std_errors.as_ref().unwrap();
        assert!((mc.a.as_matrix()[(0, 0)] - exact.a.as_matrix()[(0, 0)]).abs() < 1e-12);
        assert!(
            (mc.b.as_matrix()[(0, 0)] - exact.b.as_matrix()[(0, 0)]).abs() < 5.0 * se.b[(0, 0)]
        );
        assert!((mc.b_pf[(0, 0)] - exact.b_pf[(0, 0)]).abs() < 5.0 * se.b_pf[(0, 0)]);
        assert!(
            (mc.j_p.as_matrix()[(0, 0)] - exact.j_p.as_matrix()[(0, 0)]).abs()
                < 5.0 * se.j_p[(0, 0)]
        );
    }

    #[test]
    fn monte_carlo_matches_analytic_doa() {
        let (phi, sr, si) = doa_params();
        let p = doa_problem(4, 0.2, 0.5, phi, sr, si).unwrap();
        let exact = info_analytic(&p, &p.theta0).unwrap();
        let mc = info_monte_carlo(&p, &p.theta0, 30_000, RngStream::new(6, 0)).unwrap();
        let se = mc.std_errors.as_ref().unwrap();
        for k in 0..3 {
            for l in 0..3 {
                let tol = |s: f64| 5.0 * s + 1e-9;
                assert!(
                    (mc.b.as_matrix()[(k, l)] - exact.b.as_matrix()[(k, l)]).abs()
                        < tol(se.b[(k, l)]),
                    "b({k},{l})"
                );
                assert!(
                    (mc.b_pf[(k, l)] - exact.b_pf[(k, l)]).abs() < tol(se.b_pf[(k, l)]),
                    "b_pf({k},{l})"
                );
                assert!(
                    (mc.j_p.as_matrix()[(k, l)] - exact.j_p.as_matrix()[(k, l)]).abs()
                        < tol(se.j_p[(k, l)]),
                    "j_p({k},{l})"
                );
            }
        }
    }

    #[test]
    fn custom_pair_has_no_closed_form() {
        use crate::models::{MisspecifiedProblem, RealGaussianMeanTrue, WhiteGaussianMeanAssumed};
        use std::sync::Arc;
        let t = Arc::new(RealGaussianMeanTrue::new(DMatrix::identity(3, 3)).unwrap());
        let a = Arc::new(WhiteGaussianMeanAssumed::new(3, 1.0).unwrap());
        let p = MisspecifiedProblem::new(t, a, DVector::from_element(1, 0.0)).unwrap();
        assert!(matches!(
            info_analytic(&p, &p.theta0),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let p = box1_problem(3, 1.0, 0.2, 0.1).unwrap();
        let a = info_monte_carlo(&p, &p.theta0, 500, RngStream::new(9, 4)).unwrap();
        let b = info_monte_carlo(&p, &p.theta0, 500, RngStream::new(9, 4)).unwrap();
        assert_eq!(a.b.as_matrix(), b.b.as_matrix());
        assert_eq!(a.b_pf, b.b_pf);
    }
}
