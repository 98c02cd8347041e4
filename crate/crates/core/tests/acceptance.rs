//! Acceptance suite: nine end-to-end criteria covering the bound theory, the
//! estimator classes, the equivalent-family construction, and numerical
//! hygiene. Each test prints one PASS line (visible with `--nocapture`);
//! failures name the criterion in the panic message.

use misspec_bounds::bounds::{bound_report, efficient_estimator_map};
use misspec_bounds::equivalent::{EquivalentModel, GFunction};
use misspec_bounds::estimators::{
    check_unbiasedness, first_sample_estimator, mml_estimator, oracle_ml_estimator, run_trials,
    Estimator, EstimatorTarget, TrialEnsemble, UnbiasednessKind,
};
use misspec_bounds::experiments::{run_scenario, ExperimentConfig, Scenario};
use misspec_bounds::information::{info_analytic, info_monte_carlo, InformationSet};
use misspec_bounds::models::{
    box1_problem, box3_problem, doa_problem, gaussian_mean_problem, DensityModel,
    MisspecifiedProblem,
};
use misspec_bounds::numerics::{fd_gradient_auto, fd_jacobian, MatrixAccumulator, RngStream};
use misspec_bounds::pseudo_true::{
    fd_pseudo_true_jacobian, pseudo_true_jacobian, solve_pseudo_true, ExpectationMethod,
    PseudoTrueOptions,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

const TRIALS: usize = 100_000;

fn check(cond: bool, criterion: &str, what: &str) {
    assert!(cond, "FAIL - {criterion}: {what}");
}

fn scalar(m: &DMatrix<f64>) -> f64 {
    m[(0, 0)]
}

fn solve(problem: &MisspecifiedProblem) -> DVector<f64> {
    solve_pseudo_true(problem, &PseudoTrueOptions::default()).unwrap().theta_star
}

fn trials(
    problem: &MisspecifiedProblem,
    est: &Estimator,
    theta_star: &DVector<f64>,
    info: &InformationSet,
    stream: RngStream,
) -> TrialEnsemble {
    run_trials(problem, est, theta_star, info, TRIALS, stream).unwrap()
}

#[test]
fn criterion_1_first_sample_beats_the_sandwich_bound() {
    let c = "criterion 1";
    let (n, sigma2, eps) = (10usize, 1.0, 0.05);
    let problem = box1_problem(n, sigma2, eps, 1.0).unwrap();
    let theta_star = solve(&problem);
    let info = info_analytic(&problem, &theta_star).unwrap();
    let report = bound_report(&info, None).unwrap();
    let mcrb = scalar(report.mcrb.as_matrix());
    check((mcrb - 0.0905).abs() <= 1e-12, c, "analytic sandwich bound is 0.0905");

    let x1 = trials(&problem, &first_sample_estimator(), &theta_star, &info, RngStream::new(101, 0));
    let mml =
        trials(&problem, &mml_estimator(&problem).unwrap(), &theta_star, &info, RngStream::new(101, 1 << 32));
    let (mse_x1, se_x1) = (scalar(x1.empirical_mse.as_matrix()), scalar(&x1.mse_std_error));
    let (mse_mml, se_mml) = (scalar(mml.empirical_mse.as_matrix()), scalar(&mml.mse_std_error));
    check((mse_x1 - eps).abs() <= 3.0 * se_x1, c, "first-sample MSE is eps within 3 se");
    check(mse_x1 < mcrb, c, "first-sample MSE strictly below the sandwich bound");
    check((mse_mml - mcrb).abs() <= 3.0 * se_mml, c, "likelihood-maximizer MSE attains the bound");
    check(
        check_unbiasedness(&x1, UnbiasednessKind::Pointwise, 5.0).unwrap(),
        c,
        "first sample is pointwise unbiased",
    );
    check(
        !check_unbiasedness(&x1, UnbiasednessKind::RevisedLocal, 5.0).unwrap(),
        c,
        "first sample fails the score-bias condition (outside the bounded class)",
    );
    println!("PASS - criterion 1: first sample beats the sandwich bound from outside its class");
}

#[test]
fn criterion_2_projected_bound_is_attained_by_the_oracle() {
    let c = "criterion 2";
    let (n, sigma2, eps) = (10usize, 1.0, 0.05);
    let problem = box1_problem(n, sigma2, eps, 1.0).unwrap();
    let theta_star = solve(&problem);
    let info = info_analytic(&problem, &theta_star).unwrap();
    let report = bound_report(&info, None).unwrap();
    let nmcrb = scalar(report.nmcrb.as_matrix());
    let crb = scalar(report.crb.as_matrix());
    let closed = eps / ((n as f64 - 1.0) * eps / sigma2 + 1.0);
    check((nmcrb - closed).abs() <= 1e-12, c, "projected bound matches its closed form");
    check((nmcrb - crb).abs() <= 1e-12, c, "projected bound equals the oracle bound");

    let oracle = trials(
        &problem,
        &oracle_ml_estimator(&problem).unwrap(),
        &theta_star,
        &info,
        RngStream::new(102, 0),
    );
    let x1 = trials(&problem, &first_sample_estimator(), &theta_star, &info, RngStream::new(102, 1 << 32));
    let (mse_o, se_o) = (scalar(oracle.empirical_mse.as_matrix()), scalar(&oracle.mse_std_error));
    let (mse_x1, se_x1) = (scalar(x1.empirical_mse.as_matrix()), scalar(&x1.mse_std_error));
    check((mse_o - nmcrb).abs() <= 3.0 * se_o, c, "oracle MSE attains the projected bound");
    check(mse_x1 >= nmcrb - 3.0 * se_x1, c, "first-sample MSE does not beat the projected bound");
    check(
        check_unbiasedness(&oracle, UnbiasednessKind::NaiveLocal, 5.0).unwrap(),
        c,
        "oracle passes true-score local unbiasedness",
    );
    println!("PASS - criterion 2: projected bound equals the oracle bound and is attained");
}

#[test]
fn criterion_3_proportional_scores_collapse_the_bounds() {
    let c = "criterion 3";
    let (n, s1, s2) = (5usize, 2.0, 1.0);
    let problem = box3_problem(n, s1, s2, 1.0).unwrap();
    let theta_star = solve(&problem);
    let report = bound_report(&info_analytic(&problem, &theta_star).unwrap(), None).unwrap();
    let mcrb = scalar(report.mcrb.as_matrix());
    let nmcrb = scalar(report.nmcrb.as_matrix());
    check((mcrb - 0.4).abs() <= 1e-12, c, "sandwich bound is 0.4");
    check((mcrb - nmcrb).abs() <= 1e-12, c, "sandwich and projected bounds coincide");

    let ratio = s2 / s1;
    let mut rng = RngStream::new(103, 0).rng();
    for _ in 0..1000 {
        let x = problem.true_model.sample(&problem.theta0, &mut rng).unwrap();
        let sf = problem.assumed_model.score(&x, &theta_star).unwrap();
        let sp = problem.true_model.score(&x, &problem.theta0).unwrap();
        check(
            (&sp - sf.scale(ratio)).norm() < 1e-12,
            c,
            "true score is proportional to the assumed score per sample",
        );
    }
    println!("PASS - criterion 3: proportional pair collapses the two bounds");
}

#[test]
fn criterion_4_randomized_bound_ordering() {
    let c = "criterion 4";
    for i in 0..100u64 {
        let mut rng = RngStream::new(104, i).rng();
        let n = rng.gen_range(2..=12usize);
        let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let cov = &g * g.transpose() + DMatrix::identity(n, n).scale(0.1);
        let problem = gaussian_mean_problem(cov, 1.0, 1.0).unwrap();
        let theta_star = solve(&problem);
        let report = bound_report(&info_analytic(&problem, &theta_star).unwrap(), None).unwrap();
        check(
            report.min_gap_eig >= -1e-8,
            c,
            &format!("sandwich >= projected on random case {i}"),
        );
        check(report.order_ok, c, &format!("full bound ordering on random case {i}"));
    }
    println!("PASS - criterion 4: bound ordering holds on 100 random problems");
}

#[test]
fn criterion_5_equivalent_family_realizes_the_sandwich_bound() {
    let c = "criterion 5";
    let problem = box1_problem(4, 1.0, 0.1, 1.0).unwrap();
    let theta_star = solve(&problem);
    let info = info_analytic(&problem, &theta_star).unwrap();
    let mcrb = scalar(bound_report(&info, None).unwrap().mcrb.as_matrix());

    for gfun in [GFunction::identity(), GFunction::vuong()] {
        let name = gfun.name().to_string();
        let dg = gfun.derivative_at_one();
        let eq = EquivalentModel::new(problem.clone(), gfun, theta_star.clone()).unwrap();

        let norm = eq.normalizer(&theta_star, 100, RngStream::new(105, 0)).unwrap();
        check(
            norm.value == 1.0 && norm.std_error == 0.0,
            c,
            &format!("{name}: normalizer is exactly 1 at the operating point"),
        );

        let mut rng = RngStream::new(105, 1).rng();
        for _ in 0..1000 {
            let x = eq.base().true_model.sample(&eq.base().theta0, &mut rng).unwrap();
            let lhs = eq.log_pdf_equivalent(&x, &theta_star, 1.0).unwrap();
            let rhs = eq.base().true_model.log_pdf(&x, &eq.base().theta0).unwrap();
            check(lhs == rhs, c, &format!("{name}: pointwise equivalence is exact"));
        }

        let fit = eq.verify_proportional_score(1000, RngStream::new(105, 2)).unwrap();
        let expected = DMatrix::identity(1, 1).scale(1.0 / dg);
        check(
            (&fit.w_matrix - expected).abs().max() < 1e-12 && fit.max_residual < 1e-12,
            c,
            &format!("{name}: fitted score map is (1/g'(1)) I"),
        );

        let (nmcrb, se) =
            eq.naive_mcrb_via_equivalent(100_000, 20, RngStream::new(105, 3)).unwrap();
        check(
            (scalar(nmcrb.as_matrix()) - mcrb).abs() <= 5.0 * scalar(&se),
            c,
            &format!("{name}: projected bound via the family matches the sandwich bound"),
        );
    }
    println!("PASS - criterion 5: equivalent families reproduce the sandwich bound");
}

#[test]
fn criterion_6_pseudo_true_jacobian_matches_information_ratio() {
    let c = "criterion 6";
    // Scalar Gaussian pair on the analytic expectation path.
    let problem = box1_problem(10, 1.0, 0.05, 1.0).unwrap();
    let theta_star = solve(&problem);
    let analytic = pseudo_true_jacobian(&info_analytic(&problem, &theta_star).unwrap()).unwrap();
    let fd = fd_pseudo_true_jacobian(
        |v| box1_problem(10, 1.0, 0.05, v[0]),
        &problem.theta0,
        &PseudoTrueOptions::default(),
    )
    .unwrap();
    let rel = (&fd - &analytic).norm() / analytic.norm();
    check(rel < 1e-3, c, "analytic-path finite differences match a^-1 b_pf");

    // Colored-noise direction finding on the sample-average path with
    // common random numbers across the finite-difference evaluations.
    let doa = doa_problem(8, 0.1, 0.5, 0.4, 1.0, 0.2).unwrap();
    let options = PseudoTrueOptions {
        method: ExpectationMethod::SampleAverage {
            n_samples: 100_000,
            stream: RngStream::new(6, 0),
        },
        init: Some(doa.theta0.clone()),
        ..PseudoTrueOptions::default()
    };
    let fd = fd_pseudo_true_jacobian(
        |v| doa_problem(8, 0.1, 0.5, v[0], v[1], v[2]),
        &doa.theta0,
        &options,
    )
    .unwrap();
    let analytic =
        pseudo_true_jacobian(&info_analytic(&doa, &doa.theta0).unwrap()).unwrap();
    let rel = (&fd - &analytic).norm() / analytic.norm();
    check(rel < 1e-3, c, "sample-average finite differences match a^-1 b_pf");
    println!("PASS - criterion 6: pseudo-true sensitivity equals a^-1 b_pf both ways");
}

#[test]
fn criterion_7_doa_sweep_orderings() {
    let c = "criterion 7";
    // Full-budget sweep: 10 correlation values, 10^4 trials each (slow).
    let cfg = ExperimentConfig::for_scenario(Scenario::DoaSweep);
    let report = run_scenario(&cfg).unwrap();
    for chk in &report.checks {
        check(chk.passed, c, &chk.name);
    }
    check(report.table.rows.len() == cfg.rho.len(), c, "one row per correlation value");
    println!("PASS - criterion 7: direction-finding sweep reproduces the bias and RMSE orderings");
}

#[test]
fn criterion_8_efficient_map_coincides_with_the_likelihood_maximizer() {
    let c = "criterion 8";
    for (label, problem) in [
        ("box1", box1_problem(10, 1.0, 0.05, 1.0).unwrap()),
        ("box3", box3_problem(5, 2.0, 1.0, 1.0).unwrap()),
    ] {
        let theta_star = solve(&problem);
        let info = info_analytic(&problem, &theta_star).unwrap();
        let map = efficient_estimator_map(&problem, &theta_star, &info).unwrap();
        let mml = mml_estimator(&problem).unwrap();
        let mut rng = RngStream::new(108, 0).rng();
        for _ in 0..1000 {
            let x = problem.true_model.sample(&problem.theta0, &mut rng).unwrap();
            let d = (map(&x).unwrap() - mml.estimate(&x).unwrap()).norm();
            check(d <= 1e-12, c, &format!("{label}: maps coincide per sample"));
        }
    }

    let problem = box1_problem(10, 1.0, 0.05, 1.0).unwrap();
    let theta_star = solve(&problem);
    let info = info_analytic(&problem, &theta_star).unwrap();
    let mcrb = scalar(bound_report(&info, None).unwrap().mcrb.as_matrix());
    let map = efficient_estimator_map(&problem, &theta_star, &info).unwrap();
    let est = Estimator::new("efficient-map", EstimatorTarget::PseudoTrue, move |x| map(x));
    let ens = trials(&problem, &est, &theta_star, &info, RngStream::new(108, 1 << 32));
    let (mse, se) = (scalar(ens.empirical_mse.as_matrix()), scalar(&ens.mse_std_error));
    check((mse - mcrb).abs() <= 3.0 * se, c, "efficient map attains the sandwich bound");
    println!("PASS - criterion 8: the bound-attaining map is the likelihood maximizer");
}

#[test]
fn criterion_9_numerical_hygiene() {
    let c = "criterion 9";
    let gauss = box1_problem(6, 1.0, 0.2, 0.7).unwrap();
    let doa = doa_problem(8, 0.1, 0.5, 0.4, 1.0, 0.2).unwrap();

    // Analytic scores and Hessians match finite differences at random points.
    let mut rng = RngStream::new(109, 0).rng();
    let models: Vec<(&str, &dyn DensityModel, &MisspecifiedProblem, bool)> = vec![
        ("gaussian-true", gauss.true_model.as_ref(), &gauss, false),
        ("gaussian-assumed", gauss.assumed_model.as_ref(), &gauss, false),
        ("doa-true", doa.true_model.as_ref(), &doa, true),
        ("doa-assumed", doa.assumed_model.as_ref(), &doa, true),
    ];
    for (label, model, problem, is_doa) in models {
        for _ in 0..100 {
            let theta = if is_doa {
                DVector::from_vec(vec![
                    rng.gen_range(-1.2..1.2),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ])
            } else {
                DVector::from_element(1, rng.gen_range(-2.0..2.0))
            };
            let x = problem.true_model.sample(&problem.theta0, &mut rng).unwrap();
            let score = model.score(&x, &theta).unwrap();
            let fd_score =
                fd_gradient_auto(|t| model.log_pdf(&x, t), &theta).unwrap();
            let rel = (&score - &fd_score).norm() / score.norm().max(1.0);
            check(rel < 1e-6, c, &format!("{label}: analytic score matches finite differences"));

            let hess = model.hessian(&x, &theta).unwrap();
            let fd_hess = fd_jacobian(|t| model.score(&x, t), &theta, 1e-5).unwrap();
            let fd_hess = (&fd_hess + fd_hess.transpose()).scale(0.5);
            let rel = (&hess - &fd_hess).norm() / hess.norm().max(1.0);
            check(rel < 1e-5, c, &format!("{label}: analytic Hessian matches finite differences"));
        }
    }

    // The true-model score has zero mean under the true model.
    for (label, problem) in [("gaussian", &gauss), ("doa", &doa)] {
        let mut rng = RngStream::new(109, 1).rng();
        let d = problem.true_param_dim();
        let mut acc = MatrixAccumulator::new(d, 1);
        for _ in 0..TRIALS {
            let x = problem.true_model.sample(&problem.theta0, &mut rng).unwrap();
            let s = problem.true_model.score(&x, &problem.theta0).unwrap();
            acc.push(&DMatrix::from_column_slice(d, 1, s.as_slice()));
        }
        let ok = acc
            .mean()
            .iter()
            .zip(acc.std_error().iter())
            .all(|(&m, &se)| m.abs() <= 5.0 * se);
        check(ok, c, &format!("{label}: true score has zero mean within 5 se"));
    }

    // Monte Carlo information matrices agree with the closed forms.
    for (label, problem) in [("gaussian", &gauss), ("doa", &doa)] {
        let theta_star = solve(problem);
        let exact = info_analytic(problem, &theta_star).unwrap();
        let mc = info_monte_carlo(problem, &theta_star, TRIALS, RngStream::new(109, 2)).unwrap();
        let se = mc.std_errors.as_ref().unwrap();
        let pairs = [
            (exact.a.as_matrix(), mc.a.as_matrix(), &se.a, "a"),
            (exact.b.as_matrix(), mc.b.as_matrix(), &se.b, "b"),
            (&exact.b_pf, &mc.b_pf, &se.b_pf, "b_pf"),
            (exact.j_p.as_matrix(), mc.j_p.as_matrix(), &se.j_p, "j_p"),
        ];
        for (ex, est, ses, name) in pairs {
            let ok = ex
                .iter()
                .zip(est.iter())
                .zip(ses.iter())
                .all(|((&e, &v), &s)| (v - e).abs() <= 5.0 * s.max(1e-12));
            check(ok, c, &format!("{label}: Monte Carlo {name} matches the closed form"));
        }
    }
    println!("PASS - criterion 9: derivatives, score means, and information matrices check out");
}
