use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{CorrelationMatrix, JointTrialLaw};

const RATIO_TOL: f64 = 1e-9;

/// Recruitment of a MAMS trial.
///
/// `ratios[g][j]` is the cumulative number of patients on group `g` at
/// analysis `j` (0-based) as a multiple of `n`, the stage-1 control cohort.
/// Group 0 is the control; group `k + 1` is experimental arm `k`. An arm that
/// joins late has zero ratio for the analyses before it enters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecruitmentPlan {
    pub n: f64,
    pub sigma: f64,
    pub ratios: Vec<Vec<f64>>,
}

impl RecruitmentPlan {
    pub fn new(n: f64, sigma: f64, ratios: Vec<Vec<f64>>) -> Result<Self> {
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::plan(format!("n must be positive, got {n}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::plan(format!("sigma must be positive, got {sigma}")));
        }
        if ratios.len() < 2 {
            return Err(Error::plan("need a control group and at least one arm"));
        }
        if ratios.len() - 1 > super::MAX_ARMS {
            return Err(Error::plan(format!("at most {} experimental arms are supported", super::MAX_ARMS)));
        }
        let stages = ratios[0].len();
        if stages == 0 {
            return Err(Error::plan("need at least one analysis"));
        }
        for (g, row) in ratios.iter().enumerate() {
            if row.len() != stages {
                return Err(Error::plan(format!("group {g} has {} stages, control has {stages}", row.len())));
            }
            let mut prev = 0.0;
            for (j, &r) in row.iter().enumerate() {
                if !(r >= 0.0 && r.is_finite()) {
                    return Err(Error::plan(format!("ratio of group {g} at analysis {} is {r}", j + 1)));
                }
                if r < prev {
                    return Err(Error::plan(format!(
                        "cumulative ratio of group {g} decreases at analysis {}",
                        j + 1
                    )));
                }
                prev = r;
            }
            if prev <= 0.0 {
                return Err(Error::plan(format!("group {g} never recruits")));
            }
        }
        if (ratios[0][0] - 1.0).abs() > 1e-12 {
            return Err(Error::plan(format!(
                "control ratio at the first analysis must be 1, got {}",
                ratios[0][0]
            )));
        }
        Ok(RecruitmentPlan { n, sigma, ratios })
    }

    /// Equal allocation: `n` patients per group per stage.
    pub fn equal_allocation(n: f64, sigma: f64, arms: usize, stages: usize) -> Result<Self> {
        let row: Vec<f64> = (1..=stages).map(|j| j as f64).collect();
        RecruitmentPlan::new(n, sigma, vec![row; arms + 1])
    }

    pub fn arms(&self) -> usize {
        self.ratios.len() - 1
    }

    pub fn stages(&self) -> usize {
        self.ratios[0].len()
    }

    /// Cumulative ratio of group `g` after `analyses` analyses.
    #[inline]
    pub(crate) fn cumulative(&self, group: usize, analyses: usize) -> f64 {
        if analyses == 0 {
            0.0
        } else {
            self.ratios[group][analyses - 1]
        }
    }

    /// Patients recruited to `group` during stage `stage` (0-based).
    pub fn stage_patients(&self, group: usize, stage: usize) -> f64 {
        self.n * (self.cumulative(group, stage + 1) - self.cumulative(group, stage))
    }

    /// Number of analyses completed before experimental arm `arm` recruits.
    pub fn entry(&self, arm: usize) -> usize {
        self.ratios[arm + 1].iter().take_while(|&&r| r == 0.0).count()
    }

    pub fn max_patients(&self) -> f64 {
        self.n * self.ratios.iter().map(|row| row[row.len() - 1]).sum::<f64>()
    }

    /// Information of arm-versus-control comparisons built from the data
    /// recruited after `from` analyses (and after the arm entered) up to
    /// analysis `stage` (0-based). Zero if either side has no patients.
    pub fn window_information(&self, arm: usize, from: usize, stage: usize) -> f64 {
        let start = from.max(self.entry(arm));
        if stage < start {
            return 0.0;
        }
        let rk = self.cumulative(arm + 1, stage + 1) - self.cumulative(arm + 1, start);
        let r0 = self.cumulative(0, stage + 1) - self.cumulative(0, start);
        if rk <= 0.0 || r0 <= 0.0 {
            return 0.0;
        }
        rk * r0 * self.n / (self.sigma * self.sigma * (rk + r0))
    }

    /// Checks that, from `from` analyses on, every recruiting arm keeps a
    /// constant control-to-arm ratio of newly recruited patients.
    pub fn check_ratio_consistency(&self, from: usize) -> Result<()> {
        for arm in 0..self.arms() {
            let start = from.max(self.entry(arm));
            let mut reference: Option<(usize, f64)> = None;
            for j in start..self.stages() {
                let rk = self.cumulative(arm + 1, j + 1) - self.cumulative(arm + 1, start);
                let r0 = self.cumulative(0, j + 1) - self.cumulative(0, start);
                if rk <= 0.0 {
                    continue;
                }
                let ratio = r0 / rk;
                match reference {
                    None => reference = Some((j, ratio)),
                    Some((j0, ratio0)) => {
                        if (ratio - ratio0).abs() > RATIO_TOL * ratio0.abs().max(1.0) {
                            return Err(Error::RatioInconsistent {
                                arm: arm + 1,
                                detail: format!(
                                    "control/arm = {ratio0} at analysis {} but {ratio} at analysis {}",
                                    j0 + 1,
                                    j + 1
                                ),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Joint law of all `K·J` Z-statistics when the true effects are `theta`.
    pub fn joint_law(&self, theta: &[f64]) -> Result<JointTrialLaw> {
        let k_arms = self.arms();
        let j_max = self.stages();
        if theta.len() != k_arms {
            return Err(Error::Dimension { expected: k_arms, got: theta.len() });
        }
        if (0..k_arms).any(|k| self.entry(k) > 0) {
            return Err(Error::plan("joint law needs every arm recruiting from the first stage"));
        }
        let dim = k_arms * j_max;
        let info = |k: usize, j: usize| self.window_information(k, 0, j);
        let var_mean = |g: usize, j: usize| self.sigma * self.sigma / (self.n * self.cumulative(g, j + 1));
        let mut means = vec![0.0; dim];
        let mut corr = vec![0.0; dim * dim];
        for j in 0..j_max {
            for k in 0..k_arms {
                let a = j * k_arms + k;
                means[a] = theta[k] * info(k, j).sqrt();
                for i in 0..j_max {
                    for l in 0..k_arms {
                        let b = i * k_arms + l;
                        let late = i.max(j);
                        let mut cov = var_mean(0, late);
                        if k == l {
                            cov += var_mean(k + 1, late);
                        }
                        corr[a * dim + b] = if a == b { 1.0 } else { cov * (info(k, j) * info(l, i)).sqrt() };
                    }
                }
            }
        }
        JointTrialLaw::new(k_arms, j_max, means, CorrelationMatrix::new(dim, corr)?)
    }
}

/// `ℐ_k^(j)` for `group = k ≥ 1` at analysis `stage` (0-based).
pub fn information_level(plan: &RecruitmentPlan, group: usize, stage: usize) -> Result<f64> {
    if group == 0 {
        return Err(Error::domain("the control group carries no treatment effect"));
    }
    if group > plan.arms() {
        return Err(Error::Dimension { expected: plan.arms(), got: group });
    }
    if stage >= plan.stages() {
        return Err(Error::Dimension { expected: plan.stages(), got: stage + 1 });
    }
    Ok(plan.window_information(group - 1, 0, stage))
}

pub fn z_statistic(effect_estimate: f64, info: f64) -> Result<f64> {
    if !(info > 0.0) {
        return Err(Error::domain(format!("information must be positive, got {info}")));
    }
    Ok(effect_estimate * info.sqrt())
}

/// Draws stagewise sufficient statistics for the analyses after `from` and
/// turns them into arm-versus-control Z-statistics that use only that data.
#[derive(Clone, Debug)]
pub(crate) struct WindowSampler {
    pub arms: usize,
    pub groups: usize,
    pub width: usize,
    /// `g * width + w`
    patients: Vec<f64>,
    noise: Vec<f64>,
    /// `k * width + w`: relative stage at which arm k's comparison starts.
    arm_start: Vec<usize>,
    arm_cum: Vec<f64>,
    ctrl_cum: Vec<f64>,
    sqrt_info: Vec<f64>,
}

impl WindowSampler {
    pub fn new(plan: &RecruitmentPlan, from: usize) -> Self {
        let arms = plan.arms();
        let groups = arms + 1;
        let width = plan.stages() - from;
        let mut patients = vec![0.0; groups * width];
        let mut noise = vec![0.0; groups * width];
        for g in 0..groups {
            for w in 0..width {
                let m = plan.stage_patients(g, from + w);
                patients[g * width + w] = m;
                noise[g * width + w] = plan.sigma * m.sqrt();
            }
        }
        let mut arm_start = vec![0; arms];
        let mut arm_cum = vec![0.0; arms * width];
        let mut ctrl_cum = vec![0.0; arms * width];
        let mut sqrt_info = vec![0.0; arms * width];
        for k in 0..arms {
            let start = from.max(plan.entry(k)) - from;
            arm_start[k] = start;
            let (mut mk, mut m0) = (0.0, 0.0);
            for w in start..width {
                mk += patients[(k + 1) * width + w];
                m0 += patients[w];
                arm_cum[k * width + w] = mk;
                ctrl_cum[k * width + w] = m0;
                sqrt_info[k * width + w] = plan.window_information(k, from, from + w).sqrt();
            }
        }
        WindowSampler { arms, groups, width, patients, noise, arm_start, arm_cum, ctrl_cum, sqrt_info }
    }

    pub fn normals(&self) -> usize {
        self.groups * self.width
    }

    pub fn draw<R: Rng>(&self, rng: &mut R, e: &mut [f64]) {
        for v in e.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
    }

    /// Z-statistics `out[k * width + w]` from standard-normal group
    /// increments `e[g * width + w]` and true effects `theta`. Comparisons
    /// with no data yet are `-inf`.
    pub fn z_paths(&self, e: &[f64], theta: &[f64], out: &mut [f64]) {
        let width = self.width;
        for k in 0..self.arms {
            let (mut arm_noise, mut ctrl_noise) = (0.0, 0.0);
            for w in 0..width {
                let idx = k * width + w;
                if w < self.arm_start[k] {
                    out[idx] = f64::NEG_INFINITY;
                    continue;
                }
                arm_noise += self.noise[(k + 1) * width + w] * e[(k + 1) * width + w];
                ctrl_noise += self.noise[w] * e[w];
                let (mk, m0) = (self.arm_cum[idx], self.ctrl_cum[idx]);
                out[idx] = if mk > 0.0 && m0 > 0.0 {
                    (theta[k] + arm_noise / mk - ctrl_noise / m0) * self.sqrt_info[idx]
                } else {
                    f64::NEG_INFINITY
                };
            }
        }
    }

    /// Patients recruited during window stage `w` when the arms in `active`
    /// are still recruiting.
    #[inline]
    pub fn recruit(&self, w: usize, active: u32) -> f64 {
        if active == 0 {
            return 0.0;
        }
        let mut total = self.patients[w];
        let mut bits = active;
        while bits != 0 {
            let k = bits.trailing_zeros() as usize;
            total += self.patients[(k + 1) * self.width + w];
            bits &= bits - 1;
        }
        total
    }
}
