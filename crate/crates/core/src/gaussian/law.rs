use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::CorrelationMatrix;
use crate::design::StopRule;
use crate::error::{Error, Result};
use crate::estimate::Estimate;
use crate::rng::{chunked, Streams};

/// Joint normal law of the `K·J` Z-statistics, ordered stage-major
/// (coordinate `j * K + k` is arm `k` at analysis `j`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointTrialLaw {
    pub arms: usize,
    pub stages: usize,
    pub means: Vec<f64>,
    pub correlation: CorrelationMatrix,
}

impl JointTrialLaw {
    pub fn new(arms: usize, stages: usize, means: Vec<f64>, correlation: CorrelationMatrix) -> Result<Self> {
        let dim = arms * stages;
        if means.len() != dim {
            return Err(Error::Dimension { expected: dim, got: means.len() });
        }
        if correlation.dim() != dim {
            return Err(Error::Dimension { expected: dim, got: correlation.dim() });
        }
        Ok(JointTrialLaw { arms, stages, means, correlation })
    }

    #[inline]
    pub fn index(&self, arm: usize, stage: usize) -> usize {
        stage * self.arms + arm
    }

    /// Marginal law of the first analysis only.
    pub fn first_stage(&self) -> (Vec<f64>, CorrelationMatrix) {
        let k = self.arms;
        let mut entries = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                entries[i * k + j] = self.correlation.get(i, j);
            }
        }
        (self.means[..k].to_vec(), CorrelationMatrix::new(k, entries).expect("principal submatrix"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingEstimate {
    /// Probability that at least one arm crosses its efficacy bound.
    pub reject_any: Estimate,
    /// Expected number of efficacy crossings, which depends on the stop rule.
    pub expected_rejections: f64,
}

/// Monte Carlo probability that the group-sequential procedure with one
/// common set of bounds rejects at least one hypothesis.
///
/// An arm below `lower[j]` at a non-final analysis is dropped for good. The
/// final analysis is efficacy-only, so `lower[J-1]` is ignored.
pub fn crossing_probability(
    law: &JointTrialLaw,
    upper: &[f64],
    lower: &[f64],
    stop_rule: StopRule,
    replicates: u64,
    seed: u64,
) -> Result<CrossingEstimate> {
    let j_max = law.stages;
    if upper.len() != j_max {
        return Err(Error::Dimension { expected: j_max, got: upper.len() });
    }
    if lower.len() != j_max {
        return Err(Error::Dimension { expected: j_max, got: lower.len() });
    }
    if upper.iter().chain(lower).any(|b| b.is_nan()) {
        return Err(Error::domain("boundary is NaN"));
    }
    for j in 0..j_max.saturating_sub(1) {
        if lower[j] > upper[j] {
            return Err(Error::domain(format!(
                "futility bound {} exceeds efficacy bound {} at analysis {}",
                lower[j],
                upper[j],
                j + 1
            )));
        }
    }
    if replicates == 0 {
        return Err(Error::domain("replicate count must be positive"));
    }

    let dim = law.arms * law.stages;
    let chol = law.correlation.cholesky();
    let streams = Streams::new(seed, "crossing-probability");
    let parts = chunked(replicates, |range| {
        let mut e = vec![0.0; dim];
        let mut x = vec![0.0; dim];
        let mut hits = 0u64;
        let mut crossings = 0u64;
        for rep in range {
            let mut rng = streams.replicate(rep);
            for v in e.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            for i in 0..dim {
                let row = &chol[i * dim..i * dim + i + 1];
                x[i] = law.means[i] + row.iter().zip(&e).map(|(l, z)| l * z).sum::<f64>();
            }
            let mut active = vec![true; law.arms];
            let mut any = false;
            'stages: for j in 0..j_max {
                let mut crossed_here = 0u64;
                for k in 0..law.arms {
                    if active[k] && x[law.index(k, j)] > upper[j] {
                        crossed_here += 1;
                        active[k] = false;
                    }
                }
                if crossed_here > 0 {
                    any = true;
                    crossings += crossed_here;
                    if stop_rule == StopRule::StopOnFirst {
                        break 'stages;
                    }
                }
                if j + 1 == j_max {
                    break;
                }
                for k in 0..law.arms {
                    if active[k] && x[law.index(k, j)] < lower[j] {
                        active[k] = false;
                    }
                }
                if !active.iter().any(|&a| a) {
                    break;
                }
            }
            hits += any as u64;
        }
        (hits, crossings)
    });
    let hits: u64 = parts.iter().map(|p| p.0).sum();
    let crossings: u64 = parts.iter().map(|p| p.1).sum();
    Ok(CrossingEstimate {
        reject_any: Estimate::proportion(hits, replicates),
        expected_rejections: crossings as f64 / replicates as f64,
    })
}
