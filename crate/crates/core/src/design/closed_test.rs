use serde::{Deserialize, Serialize};

use super::calibrate::calibrate_on_bank;
use super::{
    ArmView, BoundaryShape, CalibrationSettings, HypothesisSet, PathBank, RecruitmentPlan, SequentialRule, StopRule,
};
use crate::error::{Error, Result};
use crate::rng::Streams;

/// Bounds of one intersection test, Z-scale, one entry per analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySet {
    pub upper: Vec<f64>,
    /// Shared futility bounds. The last entry is never used for dropping.
    pub lower: Vec<f64>,
    pub level: f64,
    /// Solved shape constant `C`.
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedTest {
    pub plan: RecruitmentPlan,
    pub shape: BoundaryShape,
    pub alpha: f64,
    pub stop_rule: StopRule,
    pub settings: CalibrationSettings,
    /// Shared futility bounds, taken from the full intersection.
    pub futility: Vec<f64>,
    /// Every nonempty subset of arms, in [`HypothesisSet::closure`] order.
    pub family: Vec<(HypothesisSet, BoundarySet)>,
}

impl ClosedTest {
    pub fn boundaries(&self, m: HypothesisSet) -> Option<&BoundarySet> {
        self.family.get(m.index()).filter(|(h, _)| *h == m).map(|(_, b)| b)
    }

    pub fn full(&self) -> &BoundarySet {
        &self.family.last().expect("closure is nonempty").1
    }

    pub(crate) fn rule(&self) -> SequentialRule {
        let width = self.plan.stages();
        let hyps = self.family.iter().map(|(h, _)| h.mask()).collect();
        let upper = self.family.iter().flat_map(|(_, b)| b.upper.iter().copied()).collect();
        SequentialRule::new(width, hyps, upper, self.futility.clone(), self.stop_rule)
    }

    /// Structural checks used after deserialising a document.
    pub fn validate(&self) -> Result<()> {
        let arms = self.plan.arms();
        let stages = self.plan.stages();
        if self.family.len() != (1usize << arms) - 1 {
            return Err(Error::Document(format!(
                "closure of {arms} arms has {} members, found {}",
                (1usize << arms) - 1,
                self.family.len()
            )));
        }
        if self.futility.len() != stages {
            return Err(Error::Dimension { expected: stages, got: self.futility.len() });
        }
        for (i, (h, b)) in self.family.iter().enumerate() {
            if h.index() != i {
                return Err(Error::Document(format!("hypothesis {h} is out of closure order")));
            }
            if b.upper.len() != stages || b.lower != self.futility {
                return Err(Error::Document(format!("bounds of {h} do not match the plan or shared futility")));
            }
            for j in 0..stages - 1 {
                if b.lower[j] > b.upper[j] {
                    return Err(Error::Document(format!(
                        "futility above efficacy for {h} at analysis {}",
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Calibrate every intersection test. The full intersection fixes the shared
/// futility bounds; every other subset then solves its efficacy bounds only.
pub fn build_closed_test(
    plan: &RecruitmentPlan,
    shape: BoundaryShape,
    alpha: f64,
    stop_rule: StopRule,
    settings: &CalibrationSettings,
) -> Result<ClosedTest> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    plan.check_ratio_consistency(0)?;
    if (0..plan.arms()).any(|k| plan.entry(k) > 0) {
        return Err(Error::plan("every arm of the original design must recruit from the first stage"));
    }
    let arms = plan.arms();
    let stages = plan.stages();
    let bank = PathBank::null(plan, 0, settings.replicates, &Streams::new(settings.seed, "calibration"));
    let view = ArmView::identity(arms, stages);
    let (a, b) = shape.grid(0, stages);

    let full = HypothesisSet::full(arms);
    let joint = calibrate_on_bank(&bank, &view, full.mask(), &a, &b, alpha, None, None)?;
    log::debug!("full intersection {full}: C = {}", joint.scale);
    let futility = joint.lower.clone();

    let mut family = Vec::with_capacity((1 << arms) - 1);
    for m in HypothesisSet::closure(arms) {
        let set = if m == full {
            calibrate_on_bank(&bank, &view, m.mask(), &a, &b, alpha, Some(&futility), Some(joint.scale))?
        } else {
            calibrate_on_bank(&bank, &view, m.mask(), &a, &b, alpha, Some(&futility), None)?
        };
        log::debug!("{m}: C = {}", set.scale);
        family.push((m, set));
    }
    Ok(ClosedTest {
        plan: plan.clone(),
        shape,
        alpha,
        stop_rule,
        settings: *settings,
        futility,
        family,
    })
}
