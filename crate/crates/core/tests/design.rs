use std::sync::OnceLock;

use mams_core::design::{
    build_closed_test, evaluate_trial, BoundaryShape, CalibrationSettings, ClosedTest, HypothesisSet, RecruitmentPlan,
    StopReason, StopRule,
};
use mams_core::simulator::Simulate;
use mams_core::{delta_mams, Error};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn example() -> &'static ClosedTest {
    static TEST: OnceLock<ClosedTest> = OnceLock::new();
    TEST.get_or_init(|| {
        let plan = RecruitmentPlan::equal_allocation(10.0, 1.0, 2, 3).unwrap();
        build_closed_test(&plan, BoundaryShape::Triangular, 0.05, StopRule::StopOnFirst, &CalibrationSettings::default())
            .unwrap()
    })
}

#[test]
fn closure_of_two_shares_futility_and_starts_at_zero() {
    let t = example();
    assert_eq!(t.family.len(), 3);
    for (_, b) in &t.family {
        assert_eq!(b.lower, t.futility);
        for j in 0..2 {
            assert!(b.lower[j] <= b.upper[j]);
        }
    }
    assert_eq!(t.futility[0], 0.0);
    assert_eq!(t.futility[2], t.full().upper[2]);
}

#[test]
fn symmetric_plan_gives_exchangeable_singletons() {
    let t = example();
    let b1 = t.boundaries(HypothesisSet::singleton(0)).unwrap();
    let b2 = t.boundaries(HypothesisSet::singleton(1)).unwrap();
    for (u1, u2) in b1.upper.iter().zip(&b2.upper) {
        assert!((u1 - u2).abs() < 0.01, "{u1} vs {u2}");
    }
}

#[test]
fn single_arm_closure_is_a_group_sequential_test() {
    let plan = RecruitmentPlan::equal_allocation(10.0, 1.0, 1, 3).unwrap();
    let s = CalibrationSettings { replicates: 200_000, seed: 1 };
    let t = build_closed_test(&plan, BoundaryShape::Triangular, 0.05, StopRule::StopOnFirst, &s).unwrap();
    assert_eq!(t.family.len(), 1);
    assert_eq!(t.futility[0], 0.0);
    let oc = t.operating_characteristics(&[0.0], 200_000, 77).unwrap();
    assert!((oc.reject[0].value - 0.05).abs() < 3.0 * oc.reject[0].se + 0.0025, "{}", oc.reject[0]);
}

#[test]
fn global_null_level_holds_on_fresh_paths() {
    let oc = example().operating_characteristics(&[0.0, 0.0], 1_000_000, 314).unwrap();
    let any = 1.0 - oc.reject_count[0];
    assert!((any - 0.05).abs() < 0.001 + 3.0 * oc.fwer.se, "{any}");
}

#[test]
fn strong_control_over_null_and_delta_configurations() {
    let d = delta_mams();
    for theta in [[0.0, 0.0], [d, 0.0], [0.0, d], [d, d]] {
        let oc = example().operating_characteristics(&theta, 200_000, 21).unwrap();
        assert!(oc.fwer.value <= 0.05 + 3.0 * oc.fwer.se, "{theta:?}: {}", oc.fwer);
    }
}

#[test]
fn power_against_a_single_effective_arm() {
    let oc = example().operating_characteristics(&[delta_mams(), 0.0], 200_000, 22).unwrap();
    assert!(oc.reject[0].value >= 0.9 - 3.0 * oc.reject[0].se, "{}", oc.reject[0]);
}

#[test]
fn interim_of_the_worked_example_continues() {
    let path = vec![vec![2.0, 1.5], vec![-5.0; 2], vec![-5.0; 2]];
    let out = evaluate_trial(example(), &path).unwrap();
    assert_eq!(out.rejection_stage, vec![None, None]);
    assert_eq!(out.dropped, vec![Some(2), Some(2)]);
    assert_eq!(out.stop_reason, StopReason::Futility);
    let interim = mams_core::design::InterimState::observe(example(), vec![vec![2.0, 1.5]]).unwrap();
    assert!(!interim.is_stopped());
    assert!(interim.local_rejections.is_empty());
}

#[test]
fn degenerate_futility_path() {
    let path = vec![vec![f64::MIN; 2]; 3];
    let out = evaluate_trial(example(), &path).unwrap();
    assert_eq!(out.stop_stage, 1);
    assert_eq!(out.stop_reason, StopReason::Futility);
    assert!(out.rejected.iter().all(|r| !r));
    assert_eq!(out.total_patients, 30.0);
}

#[test]
fn inconsistent_allocation_is_refused() {
    let plan = RecruitmentPlan::new(10.0, 1.0, vec![vec![1.0, 3.0, 5.0], vec![1.0, 2.0, 3.0]]).unwrap();
    let s = CalibrationSettings { replicates: 1000, seed: 1 };
    let err = build_closed_test(&plan, BoundaryShape::Triangular, 0.05, StopRule::StopOnFirst, &s).unwrap_err();
    assert!(matches!(err, Error::RatioInconsistent { arm: 1, .. }), "{err}");
}

/// Direct reading of the closed-test rules, written without the bitmask
/// engine.
struct Oracle {
    rejected: Vec<bool>,
    stop_stage: usize,
    reason: StopReason,
    patients: f64,
}

fn oracle(test: &ClosedTest, path: &[Vec<f64>]) -> Oracle {
    let k = test.plan.arms();
    let j_max = test.plan.stages();
    let mut active = vec![true; k];
    let mut last = vec![0usize; k];
    let mut local = vec![false; test.family.len()];
    let mut rejected = vec![false; k];
    let mut finish = None;
    for (j, z) in path.iter().enumerate() {
        for a in 0..k {
            if active[a] {
                last[a] = j;
            }
        }
        for (h, (m, b)) in test.family.iter().enumerate() {
            if m.members().any(|a| active[a] && z[a] > b.upper[j]) {
                local[h] = true;
            }
        }
        let mut any_new = false;
        for a in 0..k {
            let all = test.family.iter().enumerate().filter(|(_, (m, _))| m.contains(a)).all(|(h, _)| local[h]);
            if active[a] && all {
                rejected[a] = true;
                active[a] = false;
                any_new = true;
            }
        }
        if any_new && test.stop_rule == StopRule::StopOnFirst {
            finish = Some((j, StopReason::Efficacy));
            break;
        }
        if j + 1 == j_max {
            finish = Some((j, StopReason::Completed));
            break;
        }
        for a in 0..k {
            if active[a] && z[a] < test.futility[j] {
                active[a] = false;
            }
        }
        if active.iter().all(|x| !x) {
            let reason = if rejected.iter().any(|&r| r) { StopReason::Efficacy } else { StopReason::Futility };
            finish = Some((j, reason));
            break;
        }
    }
    let (stop, reason) = finish.unwrap();
    let n = test.plan.n;
    let arm_patients: f64 = (0..k).map(|a| n * test.plan.ratios[a + 1][last[a]]).sum();
    let control_last = last.iter().copied().max().unwrap();
    Oracle { rejected, stop_stage: stop + 1, reason, patients: arm_patients + n * test.plan.ratios[0][control_last] }
}

#[test]
fn engine_agrees_with_direct_rule_reading() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let cont = {
        let mut t = example().clone();
        t.stop_rule = StopRule::ContinueRemaining;
        t
    };
    for test in [example(), &cont] {
        for _ in 0..1000 {
            let path: Vec<Vec<f64>> = (0..3).map(|_| (0..2).map(|_| rng.random_range(-1.0..3.5)).collect()).collect();
            let out = evaluate_trial(test, &path).unwrap();
            let o = oracle(test, &path);
            assert_eq!(out.rejected, o.rejected, "{path:?}");
            assert_eq!(out.stop_stage, o.stop_stage, "{path:?}");
            assert_eq!(out.stop_reason, o.reason, "{path:?}");
            assert_eq!(out.total_patients, o.patients, "{path:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn global_rejection_needs_every_containing_local_test(
        z in proptest::collection::vec(-1.0f64..3.5, 6),
    ) {
        let path: Vec<Vec<f64>> = z.chunks(2).map(|c| c.to_vec()).collect();
        let out = evaluate_trial(example(), &path).unwrap();
        for (k, &r) in out.rejected.iter().enumerate() {
            if r {
                for m in HypothesisSet::closure(2).filter(|m| m.contains(k)) {
                    prop_assert!(out.local_rejections.contains(&m));
                }
            }
        }
        prop_assert!(out.total_patients <= example().plan.max_patients());
    }
}
