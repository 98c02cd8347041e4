//! The projected ("naive") bound and the estimator that attains it.
//!
//! Deriving a bound from local unbiasedness against the *true* score yields
//! A^{-1} B_pf J_p^{-1} B_pf^T A^{-1}, which here collapses to the oracle
//! Cramer-Rao bound — attained by the oracle weighted-mean estimator, not by
//! the misspecified likelihood maximizer. This shows the projected bound is
//! the bound of a different (larger) estimator class.

use misspec_bounds::bounds::bound_report;
use misspec_bounds::estimators::{
    check_unbiasedness, mml_estimator, oracle_ml_estimator, run_trials, UnbiasednessKind,
};
use misspec_bounds::information::info_analytic;
use misspec_bounds::models::box1_problem;
use misspec_bounds::numerics::RngStream;
use misspec_bounds::pseudo_true::{solve_pseudo_true, PseudoTrueOptions};

fn main() -> misspec_bounds::Result<()> {
    let (n, sigma2, eps, theta0) = (10, 1.0, 0.05, 1.0);
    let n_trials = 20_000;
    let problem = box1_problem(n, sigma2, eps, theta0)?;
    let theta_star = solve_pseudo_true(&problem, &PseudoTrueOptions::default())?.theta_star;
    let info = info_analytic(&problem, &theta_star)?;
    let report = bound_report(&info, None)?;

    let mcrb = report.mcrb.as_matrix()[(0, 0)];
    let nmcrb = report.nmcrb.as_matrix()[(0, 0)];
    let crb = report.crb.as_matrix()[(0, 0)];
    let closed = eps / ((n as f64 - 1.0) * eps / sigma2 + 1.0);
    println!("sandwich bound:  {mcrb:.6}");
    println!("projected bound: {nmcrb:.6} (closed form {closed:.6})");
    println!("oracle bound:    {crb:.6}");
    assert!((nmcrb - closed).abs() < 1e-12);
    assert!((nmcrb - crb).abs() < 1e-12, "projected bound collapses to the oracle bound");
    assert!(report.order_ok, "mcrb >= nmcrb >= crb");

    let oracle = run_trials(
        &problem,
        &oracle_ml_estimator(&problem)?,
        &theta_star,
        &info,
        n_trials,
        RngStream::new(2, 0),
    )?;
    let mml = run_trials(
        &problem,
        &mml_estimator(&problem)?,
        &theta_star,
        &info,
        n_trials,
        RngStream::new(2, 1 << 32),
    )?;
    let mse_oracle = oracle.empirical_mse.as_matrix()[(0, 0)];
    let mse_mml = mml.empirical_mse.as_matrix()[(0, 0)];
    println!("oracle weighted-mean MSE over {n_trials} trials: {mse_oracle:.6} (bound {nmcrb:.6})");
    println!("likelihood-maximizer MSE:                        {mse_mml:.6} (bound {mcrb:.6})");

    let naive_ok = check_unbiasedness(&oracle, UnbiasednessKind::NaiveLocal, 5.0)?;
    println!("oracle passes true-score local unbiasedness: {naive_ok}");
    assert!(naive_ok);
    assert!(mse_oracle < mse_mml, "the oracle is strictly better but needs the true model");
    Ok(())
}
