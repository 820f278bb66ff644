//! Original MAMS design: recruitment, information, boundary shapes,
//! per-intersection calibration and sequential closed-test evaluation.

mod calibrate;
mod closed_test;
mod hypothesis;
mod plan;
mod sequential;
mod shape;

pub use calibrate::{calibrate_boundaries, CalibrationSettings};
pub use closed_test::{build_closed_test, BoundarySet, ClosedTest};
pub use hypothesis::{HypothesisSet, MAX_ARMS};
pub use plan::{information_level, z_statistic, RecruitmentPlan};
pub use sequential::{evaluate_trial, InterimState, StopReason, StopRule, TrialOutcome};
pub use shape::BoundaryShape;

pub(crate) use calibrate::{rejection_count, solve_scale, ArmView, Futility, PathBank};
pub(crate) use plan::WindowSampler;
pub(crate) use sequential::{RuleState, SequentialRule};
