use std::sync::OnceLock;

use mams_core::delta_mams;
use mams_core::design::{build_closed_test, BoundaryShape, CalibrationSettings, ClosedTest, RecruitmentPlan, StopRule};
use mams_core::simulator::{
    comparator_restart, comparator_separate_trials, conditional_power_curve, fwer_sweep, oc_table, simulate_design,
    simulate_two_phase, AmendmentRule, ScenarioGrid, Simulate,
};
use mams_core::twoarm::conditional_error_two_arm;

const CALIBRATION: CalibrationSettings = CalibrationSettings { replicates: 200_000, seed: 4 };

fn design(arms: usize, stages: usize) -> ClosedTest {
    let plan = RecruitmentPlan::equal_allocation(10.0, 1.0, arms, stages).unwrap();
    build_closed_test(&plan, BoundaryShape::Triangular, 0.05, StopRule::StopOnFirst, &CALIBRATION).unwrap()
}

fn example() -> &'static ClosedTest {
    static TEST: OnceLock<ClosedTest> = OnceLock::new();
    TEST.get_or_init(|| design(2, 3))
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let t = example();
    let theta = [delta_mams(), 0.0];
    let a = in_pool(1, || t.operating_characteristics(&theta, 30_000, 5).unwrap());
    let b = in_pool(3, || t.operating_characteristics(&theta, 30_000, 5).unwrap());
    assert_eq!(a, b);

    let sweep = |threads| in_pool(threads, || fwer_sweep(&[0.2, 0.7], 0.05, 20_000, 5).unwrap());
    assert_eq!(sweep(1), sweep(2));

    let rule = AmendmentRule { analysis: 1, new_arms: 2, inner: CalibrationSettings { replicates: 2_000, seed: 5 } };
    let two = |threads| in_pool(threads, || simulate_two_phase(t, &rule, &[0.0; 4], 300, 5).unwrap());
    assert_eq!(two(1), two(3));
}

#[test]
fn a_single_replicate_is_enough_and_zero_is_refused() {
    let oc = example().operating_characteristics(&[0.0, 0.0], 1, 3).unwrap();
    assert_eq!(oc.nsim, 1);
    assert_eq!(oc.reject_count.iter().sum::<f64>(), 1.0);
    assert!(example().operating_characteristics(&[0.0, 0.0], 0, 3).is_err());
    assert!(example().operating_characteristics(&[0.0], 10, 3).is_err());
    assert!(example().operating_characteristics(&[f64::NAN, 0.0], 10, 3).is_err());
}

#[test]
fn tallies_are_internally_consistent() {
    let t = example();
    let d = delta_mams();
    for theta in [[0.0, 0.0], [d, 0.0], [d, d], [-d, 2.0 * d]] {
        let oc = t.operating_characteristics(&theta, 50_000, 6).unwrap();
        assert!((oc.reject_count.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let by_count: f64 = oc.reject_count.iter().enumerate().map(|(r, p)| r as f64 * p).sum();
        let by_arm: f64 = oc.reject.iter().map(|e| e.value).sum();
        assert!((by_count - by_arm).abs() < 1e-12);
        let stopped: f64 = oc.stop_efficacy.iter().chain(&oc.stop_futility).sum();
        assert!(stopped <= 1.0 + 1e-12);
        assert!(oc.expected_n.value >= 30.0 && oc.expected_n.value <= oc.max_n);
        assert_eq!(oc.max_n, 90.0);
    }
}

#[test]
fn separate_trials_are_independent() {
    let d = delta_mams();
    let additional = design(2, 2);
    let r = comparator_separate_trials(example(), &additional, &[d, 0.0, d, 0.0], 200_000, 7).unwrap();
    let product = r.first.reject[0].value * r.second.reject[0].value;
    assert!((r.joint_first_arms.value - product).abs() < 4.0 * r.joint_first_arms.se, "{} vs {product}", r.joint_first_arms);
    let solo = example().operating_characteristics(&[d, 0.0], 200_000, 8).unwrap();
    assert!((r.first.reject[0].value - solo.reject[0].value).abs() < 4.0 * solo.reject[0].se);

    let null = comparator_separate_trials(example(), &additional, &[0.0; 4], 200_000, 9).unwrap();
    let p = 1.0 - (1.0 - null.first.fwer.value) * (1.0 - null.second.fwer.value);
    assert!((null.fwer.value - p).abs() < 4.0 * null.fwer.se);
    assert!(null.fwer.value > 0.08, "two trials at 5% each: {}", null.fwer);
}

#[test]
fn restart_treats_exchangeable_arms_alike() {
    let restart = design(4, 2);
    let d = delta_mams();
    let oc = comparator_restart(&restart, 30.0, &[d; 4], 200_000, 10).unwrap();
    assert_eq!(oc.prior_n, 30.0);
    assert_eq!(oc.max_n, 30.0 + restart.plan.max_patients());
    let mean = oc.reject.iter().map(|e| e.value).sum::<f64>() / 4.0;
    for e in &oc.reject {
        assert!((e.value - mean).abs() < 4.0 * e.se, "{e} vs {mean}");
    }
}

#[test]
fn naive_sweep_matches_the_bivariate_oracle() {
    let taus = [0.1, 0.3, 0.5, 0.7, 0.9];
    for p in fwer_sweep(&taus, 0.05, 200_000, 11).unwrap() {
        assert!((p.simulated.value - p.oracle).abs() < 4.0 * p.simulated.se, "tau {}: {} vs {}", p.tau, p.simulated, p.oracle);
        assert!(p.oracle > 0.05);
    }
    assert!(fwer_sweep(&[1.5], 0.05, 10, 1).is_err());
}

#[test]
fn conditional_power_curve_is_ordered_by_effect() {
    let d = mams_core::delta_two_arm();
    let grid: Vec<f64> = (0..=80).map(|i| -3.0 + 0.1 * i as f64).collect();
    let rows = conditional_power_curve(0.5, 0.05, &[[0.0, 0.0], [0.0, d], [d, d]], &grid).unwrap();
    for r in &rows {
        let level = conditional_error_two_arm(r.z, 0.5, 0.05).unwrap();
        assert!((r.conditional_error - level).abs() < 1e-12);
        assert!(r.reject_intersection[1] >= r.reject_intersection[0] - 1e-12, "z {}", r.z);
        assert!(r.reject_intersection[2] >= r.reject_intersection[1] - 1e-12, "z {}", r.z);
        // under the global null the residual test spends exactly its level
        assert!((r.reject_intersection[0] - level).abs() < 1e-6, "z {}: {}", r.z, r.reject_intersection[0]);
    }
}

#[test]
fn two_phase_accounts_for_every_trial() {
    let t = example();
    let rule = AmendmentRule { analysis: 1, new_arms: 2, inner: CalibrationSettings { replicates: 5_000, seed: 12 } };
    let r = simulate_two_phase(t, &rule, &[0.0; 4], 4_000, 12).unwrap();
    let i = &r.interim;
    assert!((i.continue_past.value + i.stop_efficacy.value + i.stop_futility.value - 1.0).abs() < 1e-12);
    assert_eq!(r.continuing.nsim, (i.continue_past.value * 4_000.0).round() as u64);
    assert_eq!(r.overall.nsim, 4_000);
    assert!(r.overall.fwer.value <= 0.05 + 3.0 * r.overall.fwer.se, "{}", r.overall.fwer);
    assert!(r.continuing.expected_n.value > 30.0 && r.continuing.expected_n.value <= 130.0);
}

#[test]
fn csv_output_is_reproducible() {
    let grid = ScenarioGrid { thetas: vec![vec![0.0, 0.0], vec![delta_mams(), 0.0]], nsim: 10_000, seed: 13 };
    let a = oc_table("x", &simulate_design(example(), &grid).unwrap());
    let b = oc_table("x", &simulate_design(example(), &grid).unwrap());
    assert_eq!(a.to_csv(false), b.to_csv(false));
    assert_eq!(a.to_csv(true), b.to_csv(true));
    let rounded = a.to_csv(true);
    let first_row: Vec<&str> = rounded.lines().nth(1).unwrap().split(',').collect();
    let fwer_col = a.columns.iter().position(|c| c == "fwer").unwrap();
    assert_eq!(first_row[fwer_col].split('.').nth(1).map(str::len), Some(2));
}
