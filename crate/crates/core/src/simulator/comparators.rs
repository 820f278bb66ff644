//! Alternatives to amending a running trial: a second, independent trial for
//! the new arms, or abandoning the current trial for a fresh one.

use serde::{Deserialize, Serialize};

use super::{check_nsim, check_theta, null_mask, OperatingCharacteristics, Runner, Simulate, Tally};
use crate::design::ClosedTest;
use crate::error::Result;
use crate::estimate::Estimate;
use crate::rng::{chunked, Streams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparateTrials {
    /// Original trial, arms `1..=K`.
    pub first: OperatingCharacteristics,
    /// Additional trial, the remaining arms.
    pub second: OperatingCharacteristics,
    /// Rejection of any true null across both trials.
    pub fwer: Estimate,
    /// `P(R_1 and R_{K+1})`, for checking that the trials are independent.
    pub joint_first_arms: Estimate,
}

/// Both trials run to completion from their own first analysis.
pub fn comparator_separate_trials(
    original: &ClosedTest,
    additional: &ClosedTest,
    theta: &[f64],
    nsim: u64,
    seed: u64,
) -> Result<SeparateTrials> {
    let k1 = original.plan.arms();
    let k2 = additional.plan.arms();
    check_theta(theta, k1 + k2)?;
    check_nsim(nsim)?;
    let (t1, t2) = theta.split_at(k1);
    let streams = Streams::new(seed, "separate-trials");
    let (s1, s2) = (streams.child("original"), streams.child("additional"));
    let (n1, n2) = (null_mask(t1), null_mask(t2));
    let parts = chunked(nsim, |range| {
        let mut a = Tally::new(k1, original.plan.stages());
        let mut b = Tally::new(k2, additional.plan.stages());
        let (mut r1, mut r2) = (Runner::new(original), Runner::new(additional));
        let (mut fwer, mut joint) = (0u64, 0u64);
        for rep in range {
            let x = r1.run(&mut s1.replicate(rep), t1);
            let y = r2.run(&mut s2.replicate(rep), t2);
            a.record(&x, n1);
            b.record(&y, n2);
            fwer += (x.global & n1 != 0 || y.global & n2 != 0) as u64;
            joint += (x.global & 1 == 1 && y.global & 1 == 1) as u64;
        }
        (a, b, fwer, joint)
    });
    let (mut first, mut second) = (Vec::new(), Vec::new());
    let (mut fwer, mut joint) = (0, 0);
    for (a, b, f, j) in parts {
        first.push(a);
        second.push(b);
        fwer += f;
        joint += j;
    }
    Ok(SeparateTrials {
        first: Tally::merge(first).finish(t1, 0.0, original.plan.max_patients()),
        second: Tally::merge(second).finish(t2, 0.0, additional.plan.max_patients()),
        fwer: Estimate::proportion(fwer, nsim),
        joint_first_arms: Estimate::proportion(joint, nsim),
    })
}

/// A fresh trial over all arms. Patients recruited to the abandoned trial
/// are reported as `prior_n` and are not part of `expected_n`.
pub fn comparator_restart(
    restart: &ClosedTest,
    discarded: f64,
    theta: &[f64],
    nsim: u64,
    seed: u64,
) -> Result<OperatingCharacteristics> {
    let mut oc = restart.operating_characteristics(theta, nsim, seed)?;
    oc.prior_n = discarded;
    oc.max_n += discarded;
    Ok(oc)
}
