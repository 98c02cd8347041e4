//! Randomized check of the bound ordering.
//!
//! For random Gaussian problems (random positive-definite covariance, white
//! assumed model) the three bounds always satisfy
//! sandwich >= projected >= oracle in the Loewner sense. This is a
//! Cauchy-Schwarz consequence, so it must survive any covariance draw.

use misspec_bounds::bounds::bound_report;
use misspec_bounds::information::info_analytic;
use misspec_bounds::models::gaussian_mean_problem;
use misspec_bounds::numerics::RngStream;
use misspec_bounds::pseudo_true::{solve_pseudo_true, PseudoTrueOptions};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> misspec_bounds::Result<()> {
    let cases = 100;
    let mut worst_gap1 = f64::INFINITY;
    let mut worst_gap2 = f64::INFINITY;
    for i in 0..cases {
        let mut rng = RngStream::new(8, i).rng();
        let n = rng.gen_range(2..=12usize);
        let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let cov = &g * g.transpose() + DMatrix::identity(n, n).scale(0.1);
        let problem = gaussian_mean_problem(cov, 1.0, 1.0)?;
        let theta_star = solve_pseudo_true(&problem, &PseudoTrueOptions::default())?.theta_star;
        let report = bound_report(&info_analytic(&problem, &theta_star)?, None)?;
        assert!(report.order_ok, "ordering failed on case {i}");
        let mcrb = report.mcrb.as_matrix()[(0, 0)];
        let nmcrb = report.nmcrb.as_matrix()[(0, 0)];
        let crb = report.crb.as_matrix()[(0, 0)];
        worst_gap1 = worst_gap1.min(mcrb - nmcrb);
        worst_gap2 = worst_gap2.min(nmcrb - crb);
    }
    println!("all {cases} random problems ordered: sandwich >= projected >= oracle");
    println!("smallest sandwich-projected gap: {worst_gap1:.3e}");
    println!("smallest projected-oracle gap:   {worst_gap2:.3e}");
    assert!(worst_gap1 >= -1e-8 && worst_gap2 >= -1e-8);
    Ok(())
}
