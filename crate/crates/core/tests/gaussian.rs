use std::f64::consts::PI;

use mams_core::design::{RecruitmentPlan, StopRule};
use mams_core::gaussian::{
    crossing_probability, dunnett_correlation, normal_quantile, upper_orthant_prob, CorrelationMatrix,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn law(arms: usize, stages: usize) -> mams_core::gaussian::JointTrialLaw {
    RecruitmentPlan::equal_allocation(10.0, 1.0, arms, stages).unwrap().joint_law(&vec![0.0; arms]).unwrap()
}

#[test]
fn doubled_control_correlation_matches_simulated_pairs() {
    let c = dunnett_correlation(&[1.0, 1.0], 2.0).unwrap();
    assert!((c.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);

    // group means with n patients per arm and 2n on control
    let n = 10.0f64;
    let se = (1.0 / n + 1.0 / (2.0 * n)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let reps = 1_000_000;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..reps {
        let c: f64 = StandardNormal.sample(&mut rng);
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        let control = c / (2.0 * n).sqrt();
        let x = (a / n.sqrt() - control) / se;
        let y = (b / n.sqrt() - control) / se;
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let r = reps as f64;
    let cov = sxy / r - sx / r * sy / r;
    let corr = cov / ((sxx / r - (sx / r).powi(2)) * (syy / r - (sy / r).powi(2))).sqrt();
    assert!((corr - 1.0 / 3.0).abs() < 0.005, "{corr}");
}

#[test]
fn one_stage_one_arm_is_a_z_test() {
    let c = normal_quantile(0.95);
    let est = crossing_probability(&law(1, 1), &[c], &[f64::NEG_INFINITY], StopRule::StopOnFirst, 200_000, 3).unwrap();
    assert!((est.reject_any.value - 0.05).abs() < 3.0 * est.reject_any.se, "{}", est.reject_any);
}

#[test]
fn inactive_first_stage_reduces_to_fixed_test() {
    let c = normal_quantile(0.95);
    let est = crossing_probability(
        &law(1, 2),
        &[f64::INFINITY, c],
        &[f64::NEG_INFINITY, c],
        StopRule::StopOnFirst,
        200_000,
        4,
    )
    .unwrap();
    assert!((est.reject_any.value - 0.05).abs() < 3.0 * est.reject_any.se, "{}", est.reject_any);
}

#[test]
fn single_stage_crossing_is_the_orthant_probability() {
    let l = law(2, 1);
    let (_, corr) = l.first_stage();
    let exact = upper_orthant_prob(&[1.2, 1.2], &corr).unwrap();
    let est = crossing_probability(&l, &[1.2], &[f64::NEG_INFINITY], StopRule::StopOnFirst, 400_000, 5).unwrap();
    assert!((est.reject_any.value - exact).abs() < 3.0 * est.reject_any.se, "{} vs {exact}", est.reject_any);
}

#[test]
fn inconsistent_bounds_are_rejected() {
    let l = law(1, 2);
    assert!(crossing_probability(&l, &[1.0, 2.0], &[1.5, 2.0], StopRule::StopOnFirst, 10, 1).is_err());
    assert!(crossing_probability(&l, &[1.0], &[0.0, 2.0], StopRule::StopOnFirst, 10, 1).is_err());
}

#[test]
fn crossing_is_identical_across_pool_sizes() {
    let l = law(2, 3);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| crossing_probability(&l, &[2.4, 2.1, 2.1], &[0.0, 1.3, 2.1], StopRule::StopOnFirst, 50_000, 8))
            .unwrap()
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn univariate_and_degenerate_orthants() {
    let one = CorrelationMatrix::identity(1);
    let p = upper_orthant_prob(&[1.6448536269514722], &one).unwrap();
    assert!((p - 0.05).abs() < 1e-10, "{p:e}");
    let half = dunnett_correlation(&[1.0, 1.0], 1.0).unwrap();
    assert_eq!(upper_orthant_prob(&[f64::INFINITY, f64::INFINITY], &half).unwrap(), 0.0);
    assert!(upper_orthant_prob(&[0.0], &half).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bivariate_origin_matches_arcsine(rho in -0.95f64..0.95) {
        let c = CorrelationMatrix::new(2, vec![1.0, rho, rho, 1.0]).unwrap();
        let exact = 1.0 - (0.25 + rho.asin() / (2.0 * PI));
        prop_assert!((upper_orthant_prob(&[0.0, 0.0], &c).unwrap() - exact).abs() < 1e-6);
    }

    #[test]
    fn shared_control_correlation_formula(r1 in 0.1f64..5.0, r2 in 0.1f64..5.0, r0 in 0.1f64..5.0) {
        let c = dunnett_correlation(&[r1, r2], r0).unwrap();
        let expected = (r1 / (r1 + r0) * r2 / (r2 + r0)).sqrt();
        prop_assert!((c.get(0, 1) - expected).abs() < 1e-12);
        prop_assert_eq!(c.get(1, 0), c.get(0, 1));
        prop_assert_eq!(c.get(0, 0), 1.0);
    }
}
