//! The three MSE lower bounds and the order relation between them.
//!
//! From an [`InformationSet`] at the pseudo-true parameter:
//!
//! * [`compute_mcrb`] — the sandwich bound `a^{-1} b a^{-1}` on the MSE
//!   around the pseudo-true parameter,
//! * [`compute_naive_mcrb`] — `a^{-1} b_pf j_p^{-1} b_pf^T a^{-1}`, obtained
//!   by treating the assumed model as correct; never above the sandwich
//!   bound, and reachable from it by projecting the assumed score onto the
//!   true score,
//! * [`compute_crb`] — the oracle bound `j_p^{-1}` for an estimator that
//!   knows the true model.
//!
//! The module also builds the estimator maps that attain the first two
//! bounds exactly for mean-correct Gaussian pairs.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::information::InformationSet;
use crate::models::{MisspecifiedProblem, Observation};
use crate::numerics::{loewner_geq, SymMatrix, DEFAULT_LOEWNER_TOL};

/// Sandwich bound `a^{-1} b a^{-1}`.
pub fn compute_mcrb(info: &InformationSet) -> Result<SymMatrix> {
    let b_ainv = info.a.solve(info.b.as_matrix())?.transpose();
    SymMatrix::symmetrize(&info.a.solve(&b_ainv)?)
}

/// Projected bound `a^{-1} b_pf j_p^{-1} b_pf^T a^{-1}`.
pub fn compute_naive_mcrb(info: &InformationSet) -> Result<SymMatrix> {
    let t = info.a.solve(&info.b_pf)?; // a^{-1} b_pf
    let u = info.j_p.solve(&t.transpose())?; // j_p^{-1} b_pf^T a^{-1}
    SymMatrix::symmetrize(&(t * u))
}

/// Oracle bound `j_p^{-1}`.
pub fn compute_crb(info: &InformationSet) -> Result<SymMatrix> {
    let eye = DMatrix::identity(info.j_p.dim(), info.j_p.dim());
    SymMatrix::symmetrize(&info.j_p.solve(&eye)?)
}

/// Outcome of the Loewner-order comparison between the three bounds.
#[derive(Debug, Clone, Copy)]
pub struct OrderReport {
    /// Whether `mcrb >= naive_mcrb` up to the tolerance.
    pub mcrb_geq_naive: bool,
    /// Whether `naive_mcrb >= crb` up to the tolerance.
    pub naive_geq_crb: bool,
    /// Smallest eigenvalue of `mcrb - naive_mcrb`.
    pub gap_mcrb_naive: f64,
    /// Smallest eigenvalue of `naive_mcrb - crb`.
    pub gap_naive_crb: f64,
}

impl OrderReport {
    pub fn holds(&self) -> bool {
        self.mcrb_geq_naive && self.naive_geq_crb
    }
}

/// Checks `mcrb >= naive_mcrb >= crb` in the Loewner order.
///
/// The bounds must share a common parameterization (square, equal dims); the
/// tolerance is absolute on the smallest eigenvalue of each difference, with
/// [`DEFAULT_LOEWNER_TOL`] as the conventional choice for unit-scale bounds.
pub fn check_order_relation(
    mcrb: &SymMatrix,
    naive_mcrb: &SymMatrix,
    crb: &SymMatrix,
    tol: Option<f64>,
) -> Result<OrderReport> {
    let tol = tol.unwrap_or(DEFAULT_LOEWNER_TOL);
    let diff1 = SymMatrix::symmetrize(&(mcrb.as_matrix() - naive_mcrb.as_matrix()))?;
    let diff2 = SymMatrix::symmetrize(&(naive_mcrb.as_matrix() - crb.as_matrix()))?;
    Ok(OrderReport {
        mcrb_geq_naive: loewner_geq(mcrb, naive_mcrb, tol)?,
        naive_geq_crb: loewner_geq(naive_mcrb, crb, tol)?,
        gap_mcrb_naive: diff1.min_eigenvalue(),
        gap_naive_crb: diff2.min_eigenvalue(),
    })
}

/// All three bounds of a problem plus their Loewner-order comparison.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub crb: SymMatrix,
    pub mcrb: SymMatrix,
    pub nmcrb: SymMatrix,
    /// Whether `mcrb >= nmcrb >= crb` held at the requested tolerance.
    pub order_ok: bool,
    /// Smallest eigenvalue of `mcrb - nmcrb`.
    pub min_gap_eig: f64,
}

/// Computes all three bounds from one information set and checks their order.
pub fn bound_report(info: &InformationSet, tol: Option<f64>) -> Result<BoundReport> {
    let mcrb = compute_mcrb(info)?;
    let nmcrb = compute_naive_mcrb(info)?;
    let crb = compute_crb(info)?;
    let order = check_order_relation(&mcrb, &nmcrb, &crb, tol)?;
    Ok(BoundReport {
        crb,
        mcrb,
        nmcrb,
        order_ok: order.holds(),
        min_gap_eig: order.gap_mcrb_naive,
    })
}

/// A deterministic observation-to-estimate map.
pub type EstimatorMap = Box<dyn Fn(&Observation) -> Result<DVector<f64>> + Send + Sync>;

/// The locally efficient misspecification-aware map
/// `x -> theta_star + a^{-1} score_f(x; theta_star)`.
///
/// Its score is affine for Gaussian mean pairs, making the map exactly
/// unbiased for the pseudo-true parameter with covariance equal to the
/// sandwich bound.
pub fn efficient_estimator_map(
    problem: &MisspecifiedProblem,
    theta_star: &DVector<f64>,
    info: &InformationSet,
) -> Result<EstimatorMap> {
    let a = info.a.clone();
    let theta_star = theta_star.clone();
    let model = problem.assumed_model.clone();
    // Fail early on unusable curvature instead of inside the closure.
    a.solve_vec(&DVector::zeros(a.dim()))?;
    Ok(Box::new(move |x: &Observation| {
        let s = model.score(x, &theta_star)?;
        Ok(&theta_star + a.solve_vec(&s)?)
    }))
}

/// The map attaining the projected bound:
/// `x -> theta_star + a^{-1} b_pf j_p^{-1} score_p(x; theta0)`.
pub fn naive_efficient_estimator_map(
    problem: &MisspecifiedProblem,
    theta_star: &DVector<f64>,
    info: &InformationSet,
) -> Result<EstimatorMap> {
    let t = info.a.solve(&info.b_pf)?;
    let gain = info.j_p.solve(&t.transpose())?.transpose(); // a^{-1} b_pf j_p^{-1}
    let theta_star = theta_star.clone();
    let theta0 = problem.theta0.clone();
    let model = problem.true_model.clone();
    Ok(Box::new(move |x: &Observation| {
        let s = model.score(x, &theta0)?;
        Ok(&theta_star + &gain * s)
    }))
}
