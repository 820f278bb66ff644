//! Adding a second experimental arm to a running two-arm trial.
//!
//! Stage 1 holds the `τn` patients seen before the addition. `Z_1^(1)` and
//! `Z_1^(2)` are the stagewise statistics of the original arm and `Z_2` the
//! new arm's stage-2-only statistic; `ξ_k` is the drift of the full-sample
//! statistic of arm `k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{bvn_cdf, dunnett_correlation, normal_cdf, normal_quantile};

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("tau must lie in (0, 1), got {tau}")))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoArmAddition {
    pub tau: f64,
    pub alpha: f64,
    pub z1_stage1: f64,
    pub xi1: f64,
    pub xi2: f64,
    /// Correlation of `Z_1^(2)` and `Z_2` through the shared control.
    pub rho: f64,
}

impl TwoArmAddition {
    /// Equal allocation after the addition, so `rho = 1/2`.
    pub fn new(tau: f64, alpha: f64, z1_stage1: f64, xi1: f64, xi2: f64) -> Result<Self> {
        check_tau(tau)?;
        check_alpha(alpha)?;
        Ok(TwoArmAddition { tau, alpha, z1_stage1, xi1, xi2, rho: 0.5 })
    }

    /// Unequal stage-2 allocation `arm1 : arm2 : control`. The original
    /// arm must keep its stage-1 arm-to-control ratio, otherwise the
    /// stagewise statistics no longer pool into `Z_1`.
    pub fn with_stage_two_allocation(mut self, stage1_ratio: f64, arm1: f64, arm2: f64, control: f64) -> Result<Self> {
        if !(stage1_ratio > 0.0) {
            return Err(Error::domain(format!("stage-1 arm-to-control ratio must be positive, got {stage1_ratio}")));
        }
        let ratio = arm1 / control;
        if (ratio - stage1_ratio).abs() > 1e-12 * stage1_ratio.max(1.0) {
            return Err(Error::RatioInconsistent {
                arm: 1,
                detail: format!("arm/control = {stage1_ratio} before the addition but {ratio} after"),
            });
        }
        self.rho = dunnett_correlation(&[arm1, arm2], control)?.get(0, 1);
        Ok(self)
    }

    pub fn conditional_error(&self) -> f64 {
        conditional_error_unchecked(self.z1_stage1, self.tau, self.alpha)
    }

    /// Means of `(Z_1^(1), Z_1^(2), Z_2)`.
    pub fn means(&self) -> (f64, f64, f64) {
        let s = (1.0 - self.tau).sqrt();
        (self.xi1 * self.tau.sqrt(), self.xi1 * s, self.xi2 * s)
    }
}

pub fn pooled_z(z_stage1: f64, z_stage2: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(tau.sqrt() * z_stage1 + (1.0 - tau).sqrt() * z_stage2)
}

fn conditional_error_unchecked(z: f64, tau: f64, alpha: f64) -> f64 {
    1.0 - normal_cdf((normal_quantile(1.0 - alpha) - tau.sqrt() * z) / (1.0 - tau).sqrt())
}

/// `A(z)`: null probability that the planned pooled test still rejects
/// given `Z_1^(1) = z`.
pub fn conditional_error_two_arm(z1_stage1: f64, tau: f64, alpha: f64) -> Result<f64> {
    check_tau(tau)?;
    check_alpha(alpha)?;
    Ok(conditional_error_unchecked(z1_stage1, tau, alpha))
}

/// Dunnett p-value `P(X > Z_D or Y > Z_D)` with `Z_D = max(z1_stage2, z2)`
/// and correlation 1/2.
pub fn dunnett_intersection_p(z1_stage2: f64, z2: f64) -> f64 {
    dunnett_p(z1_stage2.max(z2), 0.5)
}

pub fn dunnett_p(zd: f64, rho: f64) -> f64 {
    (1.0 - bvn_cdf(zd, zd, rho)).clamp(0.0, 1.0)
}

/// `c` with `dunnett_p(c, rho) = level`.
pub fn dunnett_critical_value(level: f64, rho: f64) -> f64 {
    if level >= 1.0 {
        return f64::NEG_INFINITY;
    }
    if level <= 0.0 {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (-10.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dunnett_p(mid, rho) > level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwoArmMode {
    /// Dunnett test of the intersection at level `A(z)`.
    #[default]
    Dunnett,
    /// Intersection tested through the original arm alone.
    Gatekeeping,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoArmDecision {
    pub local_h01: bool,
    pub local_h02: bool,
    pub local_h12: bool,
    pub reject_h01: bool,
    pub reject_h02: bool,
}

pub fn run_two_arm_procedure(state: &TwoArmAddition, z1_stage2: f64, z2: f64, mode: TwoArmMode) -> TwoArmDecision {
    let crit = normal_quantile(1.0 - state.alpha);
    let z1 = state.tau.sqrt() * state.z1_stage1 + (1.0 - state.tau).sqrt() * z1_stage2;
    let local_h01 = z1 > crit;
    let local_h02 = z2 > crit;
    let local_h12 = match mode {
        TwoArmMode::Dunnett => dunnett_p(z1_stage2.max(z2), state.rho) < state.conditional_error(),
        TwoArmMode::Gatekeeping => local_h01,
    };
    TwoArmDecision {
        local_h01,
        local_h02,
        local_h12,
        reject_h01: local_h01 && local_h12,
        reject_h02: local_h02 && local_h12,
    }
}

/// `P(reject H_{0,12} | Z_1^(1) = z)` in Dunnett mode, exact.
pub fn intersection_rejection_probability(state: &TwoArmAddition) -> f64 {
    let c = dunnett_critical_value(state.conditional_error(), state.rho);
    if c == f64::INFINITY {
        return 0.0;
    }
    if c == f64::NEG_INFINITY {
        return 1.0;
    }
    let (_, m1, m2) = state.means();
    (1.0 - bvn_cdf(c - m1, c - m2, state.rho)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooled_examples() {
        assert_eq!(pooled_z(0.0, 0.0, 0.5).unwrap(), 0.0);
        assert!((pooled_z(1.0, 1.0, 0.5).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(pooled_z(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn conditional_error_on_threshold_is_half() {
        for tau in [0.1f64, 0.5, 0.9] {
            let z = normal_quantile(0.95) / tau.sqrt();
            assert!((conditional_error_two_arm(z, tau, 0.05).unwrap() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn dunnett_examples() {
        assert!((dunnett_intersection_p(0.0, -1.0) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(dunnett_intersection_p(f64::INFINITY, 0.0), 0.0);
        let grid: Vec<f64> = (0..100).map(|i| -3.0 + 0.07 * i as f64).collect();
        for w in grid.windows(2) {
            assert!(dunnett_intersection_p(w[1], w[1]) < dunnett_intersection_p(w[0], w[0]));
        }
        let c = dunnett_critical_value(0.05, 0.5);
        assert!((dunnett_p(c, 0.5) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn residual_rule_is_the_planned_test() {
        let tau = 0.5;
        let crit = normal_quantile(0.95);
        for i in 0..100 {
            let z = -4.0 + 0.08 * i as f64;
            let a = conditional_error_two_arm(z, tau, 0.05).unwrap();
            let residual = normal_quantile(1.0 - a);
            for j in 0..100 {
                let z2 = -4.0 + 0.0813 * j as f64;
                let pooled = pooled_z(z, z2, tau).unwrap() > crit;
                if (pooled_z(z, z2, tau).unwrap() - crit).abs() > 1e-9 {
                    assert_eq!(z2 > residual, pooled, "z = {z}, z2 = {z2}");
                }
            }
        }
    }

    #[test]
    fn gatekeeping_never_rejects_second_alone() {
        let s = TwoArmAddition::new(0.5, 0.05, -1.0, 0.0, 3.0).unwrap();
        for i in 0..50 {
            for j in 0..50 {
                let d = run_two_arm_procedure(&s, -3.0 + 0.15 * i as f64, -3.0 + 0.15 * j as f64, TwoArmMode::Gatekeeping);
                assert!(!d.reject_h02 || d.reject_h01);
            }
        }
    }

    #[test]
    fn allocation_change_is_rejected() {
        let s = TwoArmAddition::new(0.5, 0.05, 0.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            s.with_stage_two_allocation(1.0, 2.0, 1.0, 1.0),
            Err(Error::RatioInconsistent { .. })
        ));
        let t = s.with_stage_two_allocation(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((t.rho - 0.5).abs() < 1e-15);
    }
}
