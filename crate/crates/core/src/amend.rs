//! Adding experimental arms to a MAMS trial at an interim analysis.
//!
//! After analysis `J′` the remaining data of an existing arm enter through
//! `Z = w1·Z^(J′) + w2·Z*`, where `Z*` uses post-`J′` patients only. Each
//! existing intersection keeps its conditional error `B_m` as the level of
//! the redesigned test; intersections made only of new arms get `α`, and
//! mixed ones inherit `B` of their existing part.

use serde::{Deserialize, Serialize};

use crate::design::{
    rejection_count, solve_scale, ArmView, BoundaryShape, CalibrationSettings, ClosedTest, Futility, HypothesisSet,
    InterimState, PathBank, RecruitmentPlan, RuleState, SequentialRule, StopReason, MAX_ARMS,
};
use crate::error::{Error, Result};
use crate::rng::Streams;

/// Stream purpose shared by the conditional-error bank and the amended
/// calibration bank, so that an amendment that changes nothing sees the same
/// continuation paths twice.
pub(crate) const CONTINUATION: &str = "continuation";

/// Weights splitting each existing arm's statistic at `J′`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitWeights {
    /// `J′`, 1-based.
    pub analysis: usize,
    /// `w1[k][w]` for analysis `J′ + 1 + w`.
    pub w1: Vec<Vec<f64>>,
    pub w2: Vec<Vec<f64>>,
}

/// `(w1, w2)` for arm `arm` (0-based) between analyses `analysis` and
/// `stage` (both 1-based, `stage ≥ analysis`).
pub fn split_weight(plan: &RecruitmentPlan, arm: usize, analysis: usize, stage: usize) -> Result<(f64, f64)> {
    if arm >= plan.arms() {
        return Err(Error::Dimension { expected: plan.arms(), got: arm + 1 });
    }
    if analysis == 0 || stage < analysis || stage > plan.stages() {
        return Err(Error::domain(format!("need 1 <= J' <= j <= {}, got J' = {analysis}, j = {stage}", plan.stages())));
    }
    let before = plan.cumulative(arm + 1, analysis) + plan.cumulative(0, analysis);
    let after = plan.cumulative(arm + 1, stage) + plan.cumulative(0, stage);
    if plan.cumulative(arm + 1, analysis) == 0.0 {
        // arm without data at J′: everything comes from the continuation
        return Ok((0.0, 1.0));
    }
    let w1 = (before / after).sqrt().min(1.0);
    Ok((w1, (1.0 - w1 * w1).max(0.0).sqrt()))
}

/// Weights for every arm and every analysis after `analysis`.
pub fn split_weights(plan: &RecruitmentPlan, analysis: usize) -> Result<SplitWeights> {
    if analysis == 0 || analysis >= plan.stages() {
        return Err(Error::domain(format!(
            "interim analysis must satisfy 1 <= J' < J = {}, got {analysis}; nothing left to amend",
            plan.stages()
        )));
    }
    let mut w1 = Vec::with_capacity(plan.arms());
    let mut w2 = Vec::with_capacity(plan.arms());
    for k in 0..plan.arms() {
        let (a, b): (Vec<f64>, Vec<f64>) =
            (analysis + 1..=plan.stages()).map(|j| split_weight(plan, k, analysis, j)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
        w1.push(a);
        w2.push(b);
    }
    Ok(SplitWeights { analysis, w1, w2 })
}

pub fn reconstruct_z(z_at_interim: f64, z_star: f64, w1: f64, w2: f64) -> f64 {
    w1 * z_at_interim + w2 * z_star
}

/// Original bounds re-expressed on the scale of post-`J′` data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualBoundaries {
    pub analysis: usize,
    /// `upper[w][k]` per hypothesis, for analysis `J′ + 1 + w`.
    pub family: Vec<(HypothesisSet, Vec<Vec<f64>>)>,
    /// `lower[w][k]`.
    pub lower: Vec<Vec<f64>>,
}

pub fn residual_boundaries(test: &ClosedTest, interim: &InterimState, weights: &SplitWeights) -> Result<ResidualBoundaries> {
    check_running(interim)?;
    let arms = test.plan.arms();
    let jp = interim.analysis;
    if weights.analysis != jp || weights.w1.len() != arms {
        return Err(Error::domain("weights do not belong to this interim analysis"));
    }
    let width = test.plan.stages() - jp;
    let z = interim.z();
    for k in 0..arms {
        if weights.w2[k].iter().any(|&w| w <= 0.0) {
            return Err(Error::domain(format!("arm {} gains no information after analysis {jp}", k + 1)));
        }
    }
    let map = |bound: f64, k: usize, w: usize| (bound - weights.w1[k][w] * z[k]) / weights.w2[k][w];
    let family = test
        .family
        .iter()
        .map(|(m, b)| {
            let rows = (0..width).map(|w| (0..arms).map(|k| map(b.upper[jp + w], k, w)).collect()).collect();
            (*m, rows)
        })
        .collect();
    let lower = (0..width).map(|w| (0..arms).map(|k| map(test.futility[jp + w], k, w)).collect()).collect();
    Ok(ResidualBoundaries { analysis: jp, family, lower })
}

fn check_running(interim: &InterimState) -> Result<()> {
    match interim.stopped {
        None => Ok(()),
        Some(reason) => Err(Error::TrialStopped(format!(
            "stopped for {} at analysis {}; amendment applies only to trials in progress",
            match reason {
                StopReason::Efficacy => "efficacy",
                StopReason::Futility => "futility",
                StopReason::Completed => "completion",
            },
            interim.analysis
        ))),
    }
}

/// View mapping continuation statistics of `plan` onto the cumulative scale.
fn continuation_view(plan: &RecruitmentPlan, interim: &InterimState, existing: usize, eligible: u32) -> Result<ArmView> {
    let jp = interim.analysis;
    let width = plan.stages() - jp;
    let mut view = ArmView::identity(plan.arms(), width);
    view.eligible = eligible;
    let z = interim.z();
    for k in 0..existing {
        for w in 0..width {
            let (w1, w2) = split_weight(plan, k, jp, jp + 1 + w)?;
            view.offset[k * width + w] = w1 * z[k];
            view.scale[k * width + w] = w2;
        }
    }
    Ok(view)
}

/// Null continuation paths of the original plan after `J′`.
pub(crate) fn continuation_bank(plan: &RecruitmentPlan, analysis: usize, settings: &CalibrationSettings) -> PathBank {
    PathBank::null(plan, analysis, settings.replicates, &Streams::new(settings.seed, CONTINUATION))
}

pub(crate) fn conditional_errors_on(test: &ClosedTest, interim: &InterimState, bank: &PathBank) -> Result<Vec<(HypothesisSet, f64)>> {
    check_running(interim)?;
    let jp = interim.analysis;
    let view = continuation_view(&test.plan, interim, test.plan.arms(), interim.active_mask())?;
    let lower = &test.futility[jp..];
    Ok(test
        .family
        .iter()
        .map(|(m, b)| {
            let value = if interim.is_locally_rejected(*m) {
                1.0
            } else if m.mask() & view.eligible == 0 {
                0.0
            } else {
                rejection_count(bank, &view, m.mask(), &b.upper[jp..], lower) as f64 / bank.paths as f64
            };
            (*m, value)
        })
        .collect())
}

/// `B_m` for every intersection of the original closure, under the global
/// null and the original plan. Estimated on one bank of continuation paths.
pub fn conditional_errors(
    test: &ClosedTest,
    interim: &InterimState,
    settings: &CalibrationSettings,
) -> Result<Vec<(HypothesisSet, f64)>> {
    check_running(interim)?;
    check_interim(test, interim)?;
    let bank = continuation_bank(&test.plan, interim.analysis, settings);
    conditional_errors_on(test, interim, &bank)
}

pub fn conditional_error_mams(
    test: &ClosedTest,
    interim: &InterimState,
    m: HypothesisSet,
    settings: &CalibrationSettings,
) -> Result<f64> {
    if !m.is_subset_of((1 << test.plan.arms()) - 1) {
        return Err(Error::domain(format!("{m} is not an intersection of existing arms")));
    }
    let all = conditional_errors(test, interim, settings)?;
    Ok(all[m.index()].1)
}

fn check_interim(test: &ClosedTest, interim: &InterimState) -> Result<()> {
    if interim.analysis == 0 || interim.analysis >= test.plan.stages() {
        return Err(Error::domain(format!(
            "interim analysis must satisfy 1 <= J' < J = {}, got {}",
            test.plan.stages(),
            interim.analysis
        )));
    }
    if interim.z().len() != test.plan.arms() {
        return Err(Error::Dimension { expected: test.plan.arms(), got: interim.z().len() });
    }
    Ok(())
}

/// What to change at the interim analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmendmentPlan {
    pub new_arms: usize,
    /// Recruitment over all `K + T` arms and every analysis of the amended
    /// trial; identical to the original plan through `J′`.
    pub plan: RecruitmentPlan,
    pub shape: BoundaryShape,
    #[serde(default)]
    pub time: ShapeTime,
    #[serde(default)]
    pub dropped: DroppedArms,
}

/// Level of a hypothesis whose existing part misses arms dropped for
/// futility by `J′`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DroppedArms {
    /// Conditional error of the original test of `(m ∩ existing) ∪ dropped`.
    /// Never above what the full closure would allow, so the global null
    /// stays at `α`.
    #[default]
    Pooled,
    /// Conditional error of `m ∩ existing`. Dropped arms leave the family
    /// entirely; this spends more than `α` under the global null.
    Ignored,
}

/// Information times at which the boundary shape is evaluated after `J′`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeTime {
    /// `t = (j − J′)/(J″ − J′)`: the remaining analyses form a new design.
    #[default]
    Remaining,
    /// `t = j/J″`: the original clock. With no new arms and an unchanged
    /// plan this reproduces the original test exactly.
    Cumulative,
}

impl ShapeTime {
    pub fn grid(self, shape: BoundaryShape, analysis: usize, stages: usize) -> (Vec<f64>, Vec<f64>) {
        match self {
            ShapeTime::Remaining => shape.grid(0, stages - analysis),
            ShapeTime::Cumulative => shape.grid(analysis, stages),
        }
    }
}

impl AmendmentPlan {
    /// Keep the original recruitment for every analysis; new arms recruit one
    /// unit of `n` per stage from the analysis after `J′`.
    pub fn add_arms(base: &RecruitmentPlan, analysis: usize, new_arms: usize, shape: BoundaryShape) -> Result<Self> {
        let stages = base.stages();
        let mut ratios = base.ratios.clone();
        for _ in 0..new_arms {
            let row = (0..stages).map(|j| if j < analysis { 0.0 } else { (j + 1 - analysis) as f64 }).collect();
            ratios.push(row);
        }
        Ok(AmendmentPlan { new_arms, plan: RecruitmentPlan::new(base.n, base.sigma, ratios)?, shape, time: ShapeTime::default(), dropped: DroppedArms::default() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HypothesisClass {
    /// Existing arms only.
    Existing,
    /// Added arms only.
    Added,
    /// Both.
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmendedHypothesis {
    pub set: HypothesisSet,
    pub class: HypothesisClass,
    pub level: f64,
    /// Efficacy bounds for analyses `J′+1 ..`, on the cumulative scale.
    pub upper: Vec<f64>,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmendedDesign {
    pub base: ClosedTest,
    pub interim: InterimState,
    pub new_arms: usize,
    pub plan: RecruitmentPlan,
    pub shape: BoundaryShape,
    pub time: ShapeTime,
    pub dropped: DroppedArms,
    /// Primed weights for the existing arms.
    pub weights: SplitWeights,
    /// `B_m` of every original intersection.
    pub conditional_errors: Vec<(HypothesisSet, f64)>,
    pub residual: ResidualBoundaries,
    /// Shared futility bounds for analyses `J′+1 ..`.
    pub futility: Vec<f64>,
    /// Intersections over the arms still in play (existing arms not dropped
    /// or rejected, plus the added ones).
    pub family: Vec<AmendedHypothesis>,
}

/// Banks reused across many amendments of the same kind, e.g. inside an
/// unconditional simulation.
pub(crate) struct AmendmentBanks {
    pub original: PathBank,
    pub amended: PathBank,
}

impl AmendmentBanks {
    pub fn new(test: &ClosedTest, analysis: usize, plan: &RecruitmentPlan, settings: &CalibrationSettings) -> Self {
        let original = continuation_bank(&test.plan, analysis, settings);
        let amended = if *plan == test.plan {
            original.clone()
        } else {
            continuation_bank(plan, analysis, settings)
        };
        AmendmentBanks { original, amended }
    }
}

fn validate_amendment(test: &ClosedTest, interim: &InterimState, amendment: &AmendmentPlan) -> Result<()> {
    check_running(interim)?;
    check_interim(test, interim)?;
    let old = &test.plan;
    let new = &amendment.plan;
    let k = old.arms();
    let jp = interim.analysis;
    if new.arms() != k + amendment.new_arms {
        return Err(Error::plan(format!(
            "amended plan has {} arms, expected {} existing plus {} new",
            new.arms(),
            k,
            amendment.new_arms
        )));
    }
    if new.arms() > MAX_ARMS {
        return Err(Error::plan(format!("at most {MAX_ARMS} arms in total are supported")));
    }
    if new.n != old.n || new.sigma != old.sigma {
        return Err(Error::plan("amended plan must keep n and sigma"));
    }
    if new.stages() <= jp {
        return Err(Error::plan("amended plan needs at least one analysis after the interim"));
    }
    for g in 0..=k {
        for j in 0..jp {
            if new.ratios[g][j] != old.ratios[g][j] {
                return Err(Error::plan(format!(
                    "amended plan rewrites recruitment of group {g} at analysis {} before the interim",
                    j + 1
                )));
            }
        }
    }
    for t in 0..amendment.new_arms {
        if new.entry(k + t) < jp {
            return Err(Error::plan(format!("added arm {} recruits before the interim", k + t + 1)));
        }
    }
    new.check_ratio_consistency(jp)
}

pub fn amend_design(
    test: &ClosedTest,
    interim: &InterimState,
    amendment: &AmendmentPlan,
    settings: &CalibrationSettings,
) -> Result<AmendedDesign> {
    validate_amendment(test, interim, amendment)?;
    let banks = AmendmentBanks::new(test, interim.analysis, &amendment.plan, settings);
    amend_with_banks(test, interim, amendment, &banks)
}

pub(crate) fn amend_with_banks(
    test: &ClosedTest,
    interim: &InterimState,
    amendment: &AmendmentPlan,
    banks: &AmendmentBanks,
) -> Result<AmendedDesign> {
    check_running(interim)?;
    let k = test.plan.arms();
    let jp = interim.analysis;
    let plan = &amendment.plan;
    let existing = (1u32 << k) - 1;
    let added = ((1u32 << plan.arms()) - 1) & !existing;
    let eligible = interim.active_mask() | added;

    let conditional = conditional_errors_on(test, interim, &banks.original)?;
    let residual = residual_boundaries(test, interim, &split_weights(&test.plan, jp)?)?;
    let weights = split_weights(plan, jp)?;

    let bank = &banks.amended;
    let view = continuation_view(plan, interim, k, eligible)?;
    let (a, b) = amendment.time.grid(amendment.shape, jp, plan.stages());
    let dropped = match amendment.dropped {
        DroppedArms::Pooled => interim.dropped.iter().enumerate().fold(0u32, |d, (k, &x)| d | (x as u32) << k),
        DroppedArms::Ignored => 0,
    };
    let level_of = |m: u32| match m & existing {
        0 => test.alpha,
        e => conditional[(e | dropped) as usize - 1].1,
    };
    let hint_of = |m: u32| (m & !existing == 0).then(|| test.family[m as usize - 1].1.scale);

    let futility = shared_futility(bank, &view, eligible, &a, &b, level_of(eligible), test.alpha, hint_of(eligible));

    let mut family = Vec::new();
    for mask in 1..=eligible {
        if mask & !eligible != 0 {
            continue;
        }
        let set = HypothesisSet::from_mask(mask);
        let class = match (mask & existing != 0, mask & added != 0) {
            (true, false) => HypothesisClass::Existing,
            (false, true) => HypothesisClass::Added,
            _ => HypothesisClass::Mixed,
        };
        let level = level_of(mask);
        let scale = match solve_scale(bank, &view, mask, &a, Futility::Fixed(&futility), level, hint_of(mask)) {
            Ok(c) => c,
            Err(Error::NoiseFloor { level, replicates }) => {
                log::warn!("{set}: level {level:e} below the resolution of {replicates} paths; never rejected");
                f64::INFINITY
            }
            Err(e) => return Err(e),
        };
        let upper = a.iter().map(|v| scale * v).collect();
        family.push(AmendedHypothesis { set, class, level, upper, scale });
    }

    Ok(AmendedDesign {
        base: test.clone(),
        interim: interim.clone(),
        new_arms: amendment.new_arms,
        plan: plan.clone(),
        shape: amendment.shape,
        time: amendment.time,
        dropped: amendment.dropped,
        weights,
        conditional_errors: conditional,
        residual,
        futility,
        family,
    })
}

/// Futility bounds of the full intersection, solved jointly with its
/// efficacy bounds. When its level is degenerate or out of reach the joint
/// solve is repeated at `alpha`; any fixed futility keeps the tests valid
/// because every efficacy bound is then calibrated given it.
#[allow(clippy::too_many_arguments)]
fn shared_futility(
    bank: &PathBank,
    view: &ArmView,
    full: u32,
    a: &[f64],
    b: &[f64],
    level: f64,
    alpha: f64,
    hint: Option<f64>,
) -> Vec<f64> {
    let attempt = |lvl: f64, hint: Option<f64>| {
        if lvl > 0.0 && lvl < 1.0 {
            solve_scale(bank, view, full, a, Futility::Scaled(b), lvl, hint).ok()
        } else {
            None
        }
    };
    let c = attempt(level, hint).or_else(|| {
        log::warn!("full intersection at level {level} gives no joint futility scale; using alpha = {alpha}");
        attempt(alpha, None)
    });
    let c = c.unwrap_or_else(|| {
        log::warn!("joint futility calibration failed; futility bounds set to zero scale");
        0.0
    });
    b.iter().map(|v| c * v).collect()
}

/// Outcome of the remainder of an amended trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmendedOutcome {
    /// Global rejections over all `K + T` arms, including any at the interim.
    pub rejected: Vec<bool>,
    /// 1-based analysis at which the trial stopped.
    pub stop_stage: usize,
    pub stop_reason: StopReason,
    /// Patients recruited after the interim.
    pub continuation_patients: f64,
    pub total_patients: f64,
}

impl AmendedDesign {
    pub fn arms(&self) -> usize {
        self.plan.arms()
    }

    pub fn width(&self) -> usize {
        self.plan.stages() - self.interim.analysis
    }

    pub fn max_patients(&self) -> f64 {
        self.plan.max_patients()
    }

    pub fn hypothesis(&self, m: HypothesisSet) -> Option<&AmendedHypothesis> {
        self.family.iter().find(|h| h.set == m)
    }

    pub(crate) fn rule(&self) -> SequentialRule {
        let hyps = self.family.iter().map(|h| h.set.mask()).collect();
        let upper = self.family.iter().flat_map(|h| h.upper.iter().copied()).collect();
        SequentialRule::new(self.width(), hyps, upper, self.futility.clone(), self.base.stop_rule)
    }

    pub(crate) fn view(&self) -> ArmView {
        let k = self.base.plan.arms();
        let added = ((1u32 << self.arms()) - 1) & !((1u32 << k) - 1);
        continuation_view(&self.plan, &self.interim, k, self.interim.active_mask() | added)
            .expect("validated at construction")
    }

    pub(crate) fn initial_state(&self) -> RuleState {
        let view_eligible = self.view().eligible;
        let mut st = RuleState::new(view_eligible);
        for (k, &r) in self.interim.rejected.iter().enumerate() {
            if r {
                st.global |= 1 << k;
            }
        }
        st
    }

    /// Run the amended test on continuation statistics `z_star[w][arm]`
    /// (post-`J′` data only, every arm of the amended plan).
    pub fn evaluate_continuation(&self, z_star: &[Vec<f64>]) -> Result<AmendedOutcome> {
        let width = self.width();
        let arms = self.arms();
        if z_star.len() != width {
            return Err(Error::Dimension { expected: width, got: z_star.len() });
        }
        if let Some(row) = z_star.iter().find(|r| r.len() != arms) {
            return Err(Error::Dimension { expected: arms, got: row.len() });
        }
        let rule = self.rule();
        let view = self.view();
        let mut st = self.initial_state();
        let mut patients = 0.0;
        for (w, row) in z_star.iter().enumerate() {
            patients += self.stage_patients(w, st.active);
            rule.step(&mut st, w, |k| view.offset[k * width + w] + view.scale[k * width + w] * row[k]);
            if st.stop.is_some() {
                break;
            }
        }
        let (stop, reason) = st.stop.expect("last analysis always stops");
        Ok(AmendedOutcome {
            rejected: (0..arms).map(|k| st.global >> k & 1 == 1).collect(),
            stop_stage: self.interim.analysis + stop + 1,
            stop_reason: reason,
            continuation_patients: patients,
            total_patients: self.interim.patients + patients,
        })
    }

    /// Patients recruited in continuation stage `w` with arms `active`.
    pub(crate) fn stage_patients(&self, w: usize, active: u32) -> f64 {
        if active == 0 {
            return 0.0;
        }
        let j = self.interim.analysis + w;
        let mut total = self.plan.stage_patients(0, j);
        for k in 0..self.arms() {
            if active >> k & 1 == 1 {
                total += self.plan.stage_patients(k + 1, j);
            }
        }
        total
    }
}
