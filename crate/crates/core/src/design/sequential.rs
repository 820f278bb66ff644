use serde::{Deserialize, Serialize};

use super::{ClosedTest, HypothesisSet, MAX_ARMS};
use crate::error::{Error, Result};

/// What happens once some elementary hypothesis is rejected globally.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// The first global rejection ends the whole trial.
    #[default]
    StopOnFirst,
    /// Rejected arms leave; the others carry on.
    ContinueRemaining,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Efficacy,
    Futility,
    /// Reached the last planned analysis.
    Completed,
}

pub(crate) const NEVER: usize = usize::MAX;

/// Flat closed-test decision engine shared by the original and the amended
/// designs. Hypotheses are arm masks; `upper[h * width + w]` is the efficacy
/// bound of hypothesis `h` at window analysis `w`.
#[derive(Clone, Debug)]
pub(crate) struct SequentialRule {
    pub width: usize,
    pub hyps: Vec<u32>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub stop_rule: StopRule,
    contains: [u64; MAX_ARMS],
    arms: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct RuleState {
    pub active: u32,
    pub dropped: u32,
    pub local: u64,
    pub global: u32,
    pub reject_stage: [usize; MAX_ARMS],
    pub drop_stage: [usize; MAX_ARMS],
    pub stop: Option<(usize, StopReason)>,
}

impl RuleState {
    pub fn new(active: u32) -> Self {
        RuleState {
            active,
            dropped: 0,
            local: 0,
            global: 0,
            reject_stage: [NEVER; MAX_ARMS],
            drop_stage: [NEVER; MAX_ARMS],
            stop: None,
        }
    }
}

impl SequentialRule {
    pub fn new(width: usize, hyps: Vec<u32>, upper: Vec<f64>, lower: Vec<f64>, stop_rule: StopRule) -> Self {
        debug_assert_eq!(upper.len(), hyps.len() * width);
        debug_assert_eq!(lower.len(), width);
        let mut contains = [0u64; MAX_ARMS];
        let mut arms = 0;
        for (h, &mask) in hyps.iter().enumerate() {
            arms |= mask;
            for (k, c) in contains.iter_mut().enumerate() {
                if mask >> k & 1 == 1 {
                    *c |= 1 << h;
                }
            }
        }
        SequentialRule { width, hyps, upper, lower, stop_rule, contains, arms }
    }

    /// One analysis at window stage `w`; `z(k)` is arm `k`'s statistic there
    /// (`-inf` for an arm without data yet, which is then left untouched).
    pub fn step(&self, st: &mut RuleState, w: usize, z: impl Fn(usize) -> f64) {
        if st.stop.is_some() {
            return;
        }
        for (h, &mask) in self.hyps.iter().enumerate() {
            if st.local >> h & 1 == 1 {
                continue;
            }
            let u = self.upper[h * self.width + w];
            let mut bits = mask & st.active;
            while bits != 0 {
                let k = bits.trailing_zeros() as usize;
                if z(k) > u {
                    st.local |= 1 << h;
                    break;
                }
                bits &= bits - 1;
            }
        }

        let mut newly = 0u32;
        let mut bits = st.active & self.arms;
        while bits != 0 {
            let k = bits.trailing_zeros() as usize;
            let c = self.contains[k];
            if st.local & c == c {
                newly |= 1 << k;
                st.reject_stage[k] = w;
            }
            bits &= bits - 1;
        }
        st.global |= newly;
        st.active &= !newly;
        if newly != 0 && self.stop_rule == StopRule::StopOnFirst {
            st.active = 0;
            st.stop = Some((w, StopReason::Efficacy));
            return;
        }

        if w + 1 == self.width {
            st.active = 0;
            st.stop = Some((w, StopReason::Completed));
            return;
        }
        let l = self.lower[w];
        let mut bits = st.active;
        while bits != 0 {
            let k = bits.trailing_zeros() as usize;
            let zk = z(k);
            if zk != f64::NEG_INFINITY && zk < l {
                st.active &= !(1 << k);
                st.dropped |= 1 << k;
                st.drop_stage[k] = w;
            }
            bits &= bits - 1;
        }
        if st.active == 0 {
            let reason = if st.global != 0 { StopReason::Efficacy } else { StopReason::Futility };
            st.stop = Some((w, reason));
        }
    }
}

/// Result of running a closed test along one trial path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Global rejection of each elementary hypothesis.
    pub rejected: Vec<bool>,
    /// 1-based analysis of each global rejection.
    pub rejection_stage: Vec<Option<usize>>,
    /// 1-based analysis at which each arm was dropped for futility.
    pub dropped: Vec<Option<usize>>,
    /// Every intersection rejected by its local test.
    pub local_rejections: Vec<HypothesisSet>,
    pub stop_stage: usize,
    pub stop_reason: StopReason,
    /// Patients per group, control first.
    pub patients: Vec<f64>,
    pub total_patients: f64,
}

fn check_path(test: &ClosedTest, path: &[Vec<f64>], max_stages: usize) -> Result<()> {
    let arms = test.plan.arms();
    if path.is_empty() || path.len() > max_stages {
        return Err(Error::Dimension { expected: max_stages, got: path.len() });
    }
    for row in path {
        if row.len() != arms {
            return Err(Error::Dimension { expected: arms, got: row.len() });
        }
        if row.iter().any(|z| z.is_nan()) {
            return Err(Error::domain("Z-statistic is NaN"));
        }
    }
    Ok(())
}

/// Patients per group through the analyses run so far, given the stage at
/// which each arm stopped recruiting.
fn patients_used(test: &ClosedTest, st: &RuleState, analyses: usize) -> Vec<f64> {
    let plan = &test.plan;
    let arms = plan.arms();
    let mut out = vec![0.0; arms + 1];
    let mut control_until = 0;
    for k in 0..arms {
        let last = st.reject_stage[k].min(st.drop_stage[k]).min(analyses - 1);
        let last = match st.stop {
            Some((s, _)) => last.min(s),
            None => last,
        };
        out[k + 1] = plan.n * plan.cumulative(k + 1, last + 1);
        control_until = control_until.max(last + 1);
    }
    out[0] = plan.n * plan.cumulative(0, control_until);
    out
}

fn local_sets(local: u64, hyps: &[u32]) -> Vec<HypothesisSet> {
    hyps.iter()
        .enumerate()
        .filter(|(h, _)| local >> h & 1 == 1)
        .map(|(_, &m)| HypothesisSet::from_mask(m))
        .collect()
}

/// Apply the closed test to a full trial path (`path[stage][arm]`). Stages
/// after the trial stops are ignored.
pub fn evaluate_trial(test: &ClosedTest, path: &[Vec<f64>]) -> Result<TrialOutcome> {
    let j_max = test.plan.stages();
    check_path(test, path, j_max)?;
    if path.len() != j_max {
        return Err(Error::Dimension { expected: j_max, got: path.len() });
    }
    let rule = test.rule();
    let arms = test.plan.arms();
    let mut st = RuleState::new((1u32 << arms) - 1);
    for (j, row) in path.iter().enumerate() {
        rule.step(&mut st, j, |k| row[k]);
        if st.stop.is_some() {
            break;
        }
    }
    let (stop, reason) = st.stop.expect("last analysis always stops");
    let patients = patients_used(test, &st, j_max);
    let stage = |s: usize| (s != NEVER).then(|| s + 1);
    Ok(TrialOutcome {
        rejected: (0..arms).map(|k| st.global >> k & 1 == 1).collect(),
        rejection_stage: st.reject_stage[..arms].iter().map(|&s| stage(s)).collect(),
        dropped: st.drop_stage[..arms].iter().map(|&s| stage(s)).collect(),
        local_rejections: local_sets(st.local, &rule.hyps),
        stop_stage: stop + 1,
        stop_reason: reason,
        total_patients: patients.iter().sum(),
        patients,
    })
}

/// The trial as seen at analysis `J′`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterimState {
    /// `J′`, 1-based.
    pub analysis: usize,
    /// Cumulative Z-statistics, `history[stage][arm]`, through `J′`.
    pub history: Vec<Vec<f64>>,
    pub dropped: Vec<bool>,
    pub rejected: Vec<bool>,
    pub local_rejections: Vec<HypothesisSet>,
    pub stopped: Option<StopReason>,
    /// Patients recruited through `J′`, all groups.
    pub patients: f64,
}

impl InterimState {
    /// Replays the original closed test over the observed stages.
    pub fn observe(test: &ClosedTest, history: Vec<Vec<f64>>) -> Result<Self> {
        let j_max = test.plan.stages();
        check_path(test, &history, j_max)?;
        let rule = test.rule();
        let arms = test.plan.arms();
        let mut st = RuleState::new((1u32 << arms) - 1);
        let mut stopped_at = None;
        for (j, row) in history.iter().enumerate() {
            if st.stop.is_some() {
                stopped_at.get_or_insert(j);
                break;
            }
            rule.step(&mut st, j, |k| row[k]);
        }
        if stopped_at.is_some() {
            return Err(Error::domain(format!(
                "history has {} analyses but the trial stopped after analysis {}",
                history.len(),
                st.stop.map(|(s, _)| s + 1).unwrap_or(0)
            )));
        }
        let analysis = history.len();
        let patients = patients_used(test, &st, analysis).iter().sum();
        Ok(InterimState {
            analysis,
            dropped: (0..arms).map(|k| st.dropped >> k & 1 == 1).collect(),
            rejected: (0..arms).map(|k| st.global >> k & 1 == 1).collect(),
            local_rejections: local_sets(st.local, &rule.hyps),
            stopped: st.stop.map(|(_, r)| r),
            history,
            patients,
        })
    }

    /// Interim Z-statistics at `J′`.
    pub fn z(&self) -> &[f64] {
        &self.history[self.analysis - 1]
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped.is_some()
    }

    /// Arms still recruiting after `J′`.
    pub fn active_mask(&self) -> u32 {
        let mut mask = 0;
        for (k, (&d, &r)) in self.dropped.iter().zip(&self.rejected).enumerate() {
            if !d && !r {
                mask |= 1 << k;
            }
        }
        mask
    }

    pub fn is_locally_rejected(&self, m: HypothesisSet) -> bool {
        self.local_rejections.contains(&m)
    }
}
