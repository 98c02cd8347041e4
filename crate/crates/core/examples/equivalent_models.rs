//! Pointwise-equivalent families: turning the sandwich bound into a
//! projected bound.
//!
//! From any positive g with g(1)=1 and g'(1)!=0, the family
//! p~(x;gamma) = g(f(x;gamma)/f(x;theta*)) p(x;true) / c(gamma) matches the
//! true density exactly at the operating point and has a score there that is
//! proportional to the assumed score. Computing the projected bound with p~
//! in the role of the true model therefore reproduces the sandwich bound.

use misspec_bounds::bounds::bound_report;
use misspec_bounds::equivalent::{EquivalentModel, GFunction};
use misspec_bounds::information::info_analytic;
use misspec_bounds::models::box1_problem;
use misspec_bounds::numerics::RngStream;
use misspec_bounds::pseudo_true::{solve_pseudo_true, PseudoTrueOptions};

fn main() -> misspec_bounds::Result<()> {
    let problem = box1_problem(4, 1.0, 0.1, 1.0)?;
    let theta_star = solve_pseudo_true(&problem, &PseudoTrueOptions::default())?.theta_star;
    let info = info_analytic(&problem, &theta_star)?;
    let mcrb = bound_report(&info, None)?.mcrb.as_matrix()[(0, 0)];
    println!("sandwich bound of the base pair: {mcrb:.6}");

    for gfun in [GFunction::identity(), GFunction::vuong()] {
        let name = gfun.name().to_string();
        let dg = gfun.derivative_at_one();
        let eq = EquivalentModel::new(problem.clone(), gfun, theta_star.clone())?;

        // The family coincides with the true density at the operating point.
        let c = eq.normalizer(&theta_star, 100, RngStream::new(4, 0))?;
        let mut rng = RngStream::new(4, 1).rng();
        let x = eq.base().true_model.sample(&eq.base().theta0, &mut rng)?;
        let lhs = eq.log_pdf_equivalent(&x, &theta_star, c.value)?;
        let rhs = eq.base().true_model.log_pdf(&x, &eq.base().theta0)?;
        println!("{name}: c(gamma0) = {}, log-density gap at a draw = {:e}", c.value, lhs - rhs);
        assert_eq!(lhs, rhs);

        // Its score at the operating point is g'(1) times the assumed score.
        let fit = eq.verify_proportional_score(500, RngStream::new(4, 2))?;
        println!(
            "{name}: fitted score map {:.6} (expected {:.6}), residual {:.3e}",
            fit.w_matrix[(0, 0)],
            1.0 / dg,
            fit.max_residual
        );

        // The projected bound through the family recovers the sandwich bound.
        let (nmcrb, se) = eq.naive_mcrb_via_equivalent(40_000, 20, RngStream::new(4, 3))?;
        let v = nmcrb.as_matrix()[(0, 0)];
        println!(
            "{name}: projected bound via the family = {v:.6} +- {:.2e} (sandwich {mcrb:.6})",
            se[(0, 0)]
        );
        assert!((v - mcrb).abs() <= 5.0 * se[(0, 0)]);
    }
    Ok(())
}
