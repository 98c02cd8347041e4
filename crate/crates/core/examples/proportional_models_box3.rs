//! When the two bounds coincide: proportional scores.
//!
//! If the true and assumed noise covariances are proportional (sigma1^2 I vs
//! sigma2^2 I), the true score is a fixed scalar multiple of the assumed
//! score at the pseudo-true point. The projected bound then tightens to the
//! sandwich bound exactly.

use misspec_bounds::bounds::bound_report;
use misspec_bounds::information::info_analytic;
use misspec_bounds::models::box3_problem;
use misspec_bounds::numerics::RngStream;
use misspec_bounds::pseudo_true::{solve_pseudo_true, PseudoTrueOptions};

fn main() -> misspec_bounds::Result<()> {
    let (n, sigma1_sq, sigma2_sq, theta0) = (5, 2.0, 1.0, 1.0);
    let problem = box3_problem(n, sigma1_sq, sigma2_sq, theta0)?;
    let theta_star = solve_pseudo_true(&problem, &PseudoTrueOptions::default())?.theta_star;
    let info = info_analytic(&problem, &theta_star)?;
    let report = bound_report(&info, None)?;

    let mcrb = report.mcrb.as_matrix()[(0, 0)];
    let nmcrb = report.nmcrb.as_matrix()[(0, 0)];
    println!("sandwich bound:  {mcrb:.12}");
    println!("projected bound: {nmcrb:.12}");
    println!("closed form sigma1_sq/N = {:.12}", sigma1_sq / n as f64);
    assert!((mcrb - sigma1_sq / n as f64).abs() < 1e-12);
    assert!((mcrb - nmcrb).abs() < 1e-12, "bounds coincide under proportional scores");

    // Demonstrate the per-sample proportionality driving the equality.
    let ratio = sigma2_sq / sigma1_sq;
    let mut rng = RngStream::new(3, 0).rng();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let x = problem.true_model.sample(&problem.theta0, &mut rng)?;
        let sf = problem.assumed_model.score(&x, &theta_star)?;
        let sp = problem.true_model.score(&x, &problem.theta0)?;
        worst = worst.max((&sp - sf.scale(ratio)).norm());
    }
    println!("max |score_p - {ratio} * score_f| over 1000 draws: {worst:.3e}");
    assert!(worst < 1e-12);
    Ok(())
}
