//! A first-sample estimator that beats the sandwich bound.
//!
//! The true model draws N samples of an unknown mean where the first sample
//! has a much smaller variance (eps) than the rest (sigma2); the assumed
//! model treats all samples as equally noisy. Keeping only the first sample
//! then has MSE eps, below the sandwich bound for the misspecified-likelihood
//! estimator class — legitimate, because the first-sample estimator fails the
//! score-bias condition that defines that class.

use misspec_bounds::bounds::bound_report;
use misspec_bounds::estimators::{
    check_unbiasedness, first_sample_estimator, mml_estimator, run_trials, UnbiasednessKind,
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
    println!("pseudo-true mean: {:.12} (true mean {theta0})", theta_star[0]);

    let info = info_analytic(&problem, &theta_star)?;
    let report = bound_report(&info, None)?;
    let mcrb = report.mcrb.as_matrix()[(0, 0)];
    let crb = report.crb.as_matrix()[(0, 0)];
    println!("sandwich bound (MCRB): {mcrb:.6}   oracle bound (CRB): {crb:.6}");

    let x1 = run_trials(
        &problem,
        &first_sample_estimator(),
        &theta_star,
        &info,
        n_trials,
        RngStream::new(1, 0),
    )?;
    let mml = run_trials(
        &problem,
        &mml_estimator(&problem)?,
        &theta_star,
        &info,
        n_trials,
        RngStream::new(1, 1 << 32),
    )?;

    let mse_x1 = x1.empirical_mse.as_matrix()[(0, 0)];
    let mse_mml = mml.empirical_mse.as_matrix()[(0, 0)];
    println!("first-sample MSE over {n_trials} trials: {mse_x1:.6} (theory {eps})");
    println!("likelihood-maximizer MSE:               {mse_mml:.6} (bound {mcrb:.6})");
    assert!(mse_x1 < mcrb, "first sample should beat the sandwich bound here");

    // The first sample is pointwise unbiased but carries the wrong coupling
    // with the assumed score, so it sits outside the bounded class.
    let pointwise = check_unbiasedness(&x1, UnbiasednessKind::Pointwise, 5.0)?;
    let revised = check_unbiasedness(&x1, UnbiasednessKind::RevisedLocal, 5.0)?;
    println!("first sample: pointwise unbiased = {pointwise}, score-bias test = {revised}");
    assert!(pointwise && !revised);
    println!("=> the sandwich bound is not violated; the estimator is outside its class");
    Ok(())
}
