//! Multivariate-normal kernels: correlation construction, orthant
//! probabilities and boundary-crossing probabilities of the stage-by-arm
//! Z-statistic process.

mod bvn;
mod law;
mod mvn;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub use bvn::{bvn_cdf, bvn_upper};
pub use law::{crossing_probability, CrossingEstimate, JointTrialLaw};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[inline]
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal quantile `Φ⁻¹(p)`.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    Normal::standard().inverse_cdf(p)
}

/// Symmetric, unit-diagonal, positive semi-definite correlation matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl CorrelationMatrix {
    /// Validates symmetry, the unit diagonal and semi-definiteness.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::Dimension { expected: dim * dim, got: entries.len() });
        }
        for i in 0..dim {
            if (entries[i * dim + i] - 1.0).abs() > 1e-12 {
                return Err(Error::domain(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..i {
                let a = entries[i * dim + j];
                if (a - entries[j * dim + i]).abs() > 1e-12 {
                    return Err(Error::domain(format!("entry ({i},{j}) breaks symmetry")));
                }
                if !(-1.0..=1.0).contains(&a) {
                    return Err(Error::domain(format!("entry ({i},{j}) = {a} outside [-1, 1]")));
                }
            }
        }
        if cholesky(&entries, dim).is_none() {
            return Err(Error::domain("matrix is not positive semi-definite"));
        }
        Ok(CorrelationMatrix { dim, entries })
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        CorrelationMatrix { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    /// Lower-triangular factor, row-major. Semi-definite inputs yield zero
    /// pivots for redundant coordinates.
    pub fn cholesky(&self) -> Vec<f64> {
        cholesky(&self.entries, self.dim).expect("validated on construction")
    }
}

/// Correlation between arm-versus-control Z-statistics that share one control
/// group, given per-arm and control allocation ratios.
pub fn dunnett_correlation(arm_ratios: &[f64], control_ratio: f64) -> Result<CorrelationMatrix> {
    if control_ratio <= 0.0 || !control_ratio.is_finite() {
        return Err(Error::domain(format!("control ratio must be positive, got {control_ratio}")));
    }
    if let Some(bad) = arm_ratios.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::domain(format!("arm ratios must be positive, got {bad}")));
    }
    let k = arm_ratios.len();
    let share: Vec<f64> = arm_ratios.iter().map(|r| r / (r + control_ratio)).collect();
    let mut entries = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            entries[i * k + j] = if i == j { 1.0 } else { (share[i] * share[j]).sqrt() };
        }
    }
    CorrelationMatrix::new(k, entries)
}

/// `P(X_i > c_i for some i)` for `X ~ N(0, corr)`.
pub fn upper_orthant_prob(thresholds: &[f64], corr: &CorrelationMatrix) -> Result<f64> {
    if thresholds.len() != corr.dim() {
        return Err(Error::Dimension { expected: corr.dim(), got: thresholds.len() });
    }
    if thresholds.iter().any(|c| c.is_nan()) {
        return Err(Error::domain("threshold is NaN"));
    }
    Ok((1.0 - mvn::lower_orthant(thresholds, corr.as_slice())).clamp(0.0, 1.0))
}

/// Cholesky factor of a semi-definite matrix; `None` if it is indefinite.
pub(crate) fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = a[i * n + i] - s;
                if d < -1e-10 {
                    return None;
                }
                l[i * n + i] = d.max(0.0).sqrt();
            } else if l[j * n + j] > 1e-12 {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            } else if (a[i * n + j] - s).abs() > 1e-8 {
                return None;
            }
        }
    }
    Some(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn quantile_and_cdf_invert() {
        for p in [1e-10, 0.025, 0.05, 0.5, 0.75, 0.95, 0.999_999] {
            assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-10 * p, "{p}");
        }
        assert!((normal_quantile(0.95) - 1.644_853_626_951_472_2).abs() < 1e-12);
    }

    #[test]
    fn equal_allocation_gives_half() {
        let c = dunnett_correlation(&[1.0, 1.0], 1.0).unwrap();
        assert!((c.get(0, 1) - 0.5).abs() < 1e-15);
        assert_eq!(c.get(0, 0), 1.0);
    }

    #[test]
    fn single_arm_is_identity() {
        let c = dunnett_correlation(&[3.0], 1.0).unwrap();
        assert_eq!(c, CorrelationMatrix::identity(1));
    }

    #[test]
    fn doubled_control_gives_one_third() {
        let c = dunnett_correlation(&[1.0, 1.0], 2.0).unwrap();
        assert!((c.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_ratio_rejected() {
        assert!(dunnett_correlation(&[1.0, 0.0], 1.0).is_err());
        assert!(dunnett_correlation(&[1.0], -1.0).is_err());
    }

    #[test]
    fn orthant_examples() {
        let c = dunnett_correlation(&[1.0, 1.0], 1.0).unwrap();
        let p = upper_orthant_prob(&[0.0, 0.0], &c).unwrap();
        let arcsine = 1.0 - (0.25 + (0.5f64).asin() / (2.0 * PI));
        assert!((p - arcsine).abs() < 1e-12);
        assert!((p - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(upper_orthant_prob(&[f64::INFINITY; 2], &c).unwrap(), 0.0);
        let one = CorrelationMatrix::identity(1);
        assert!((upper_orthant_prob(&[1.6449], &one).unwrap() - 0.05).abs() < 1e-4);
        assert!(upper_orthant_prob(&[0.0], &c).is_err());
    }

    #[test]
    fn invalid_matrices_rejected() {
        assert!(CorrelationMatrix::new(2, vec![1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(CorrelationMatrix::new(2, vec![1.0, 1.5, 1.5, 1.0]).is_err());
        let bad = vec![1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0];
        assert!(CorrelationMatrix::new(3, bad).is_err());
        // Perfect correlation is semi-definite and allowed.
        assert!(CorrelationMatrix::new(2, vec![1.0, 1.0, 1.0, 1.0]).is_ok());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn orthant_monotone_in_each_threshold(
            c1 in -3.0f64..3.0, c2 in -3.0f64..3.0, c3 in -3.0f64..3.0,
            bump in 0.01f64..1.0, which in 0usize..3,
        ) {
            let c = dunnett_correlation(&[1.0, 2.0, 1.0], 1.0).unwrap();
            let base = [c1, c2, c3];
            let mut raised = base;
            raised[which] += bump;
            let p0 = upper_orthant_prob(&base, &c).unwrap();
            let p1 = upper_orthant_prob(&raised, &c).unwrap();
            prop_assert!(p1 <= p0 + 1e-10);
        }

        #[test]
        fn bivariate_zero_threshold_matches_arcsine(r in -0.99f64..0.99) {
            let c = CorrelationMatrix::new(2, vec![1.0, r, r, 1.0]).unwrap();
            let p = upper_orthant_prob(&[0.0, 0.0], &c).unwrap();
            let want = 1.0 - (0.25 + r.asin() / (2.0 * std::f64::consts::PI));
            prop_assert!((p - want).abs() < 1e-6);
        }
    }
}
