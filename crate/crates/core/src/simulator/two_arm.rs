use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::Estimate;
use crate::gaussian::{bvn_cdf, normal_pdf, normal_quantile};
use crate::rng::{chunked, Streams};
use crate::twoarm::{intersection_rejection_probability, run_two_arm_procedure, TwoArmAddition, TwoArmMode};

/// Local and global rejection probabilities of the two-arm addition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoArmCharacteristics {
    pub xi: [f64; 2],
    pub tau: f64,
    pub mode: TwoArmMode,
    pub nsim: u64,
    pub local_h01: Estimate,
    pub local_h02: Estimate,
    pub local_h12: Estimate,
    pub only_h01: Estimate,
    pub only_h02: Estimate,
    pub both: Estimate,
    pub any: Estimate,
    /// Rejection of at least one hypothesis with `ξ_k ≤ 0`.
    pub fwer: Estimate,
}

fn check(tau: f64, alpha: f64, nsim: u64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::domain(format!("tau must lie in (0, 1), got {tau}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if nsim == 0 {
        return Err(Error::domain("nsim must be at least 1"));
    }
    Ok(())
}

/// One replicate: `(Z_1^(1), Z_1^(2), Z_2)` with the stage-2 pair
/// correlated at `rho`.
fn draw(rng: &mut impl rand::Rng, means: (f64, f64, f64), rho: f64) -> (f64, f64, f64) {
    let e1: f64 = StandardNormal.sample(rng);
    let e2: f64 = StandardNormal.sample(rng);
    let e3: f64 = StandardNormal.sample(rng);
    (means.0 + e1, means.1 + e2, means.2 + rho * e2 + (1.0 - rho * rho).sqrt() * e3)
}

/// Both modes see the same replicate streams for a given seed.
pub fn simulate_two_arm(
    tau: f64,
    alpha: f64,
    xi: [f64; 2],
    mode: TwoArmMode,
    nsim: u64,
    seed: u64,
) -> Result<TwoArmCharacteristics> {
    check(tau, alpha, nsim)?;
    let base = TwoArmAddition::new(tau, alpha, 0.0, xi[0], xi[1])?;
    let means = base.means();
    let streams = Streams::new(seed, "two-arm");
    let parts = chunked(nsim, |range| {
        let mut c = [0u64; 8];
        for rep in range {
            let mut rng = streams.replicate(rep);
            let (z11, z12, z2) = draw(&mut rng, means, base.rho);
            let state = TwoArmAddition { z1_stage1: z11, ..base };
            let d = run_two_arm_procedure(&state, z12, z2, mode);
            let flags = [
                d.local_h01,
                d.local_h02,
                d.local_h12,
                d.reject_h01 && !d.reject_h02,
                d.reject_h02 && !d.reject_h01,
                d.reject_h01 && d.reject_h02,
                d.reject_h01 || d.reject_h02,
                (d.reject_h01 && xi[0] <= 0.0) || (d.reject_h02 && xi[1] <= 0.0),
            ];
            for (acc, f) in c.iter_mut().zip(flags) {
                *acc += f as u64;
            }
        }
        c
    });
    let mut c = [0u64; 8];
    for p in parts {
        for (a, b) in c.iter_mut().zip(p) {
            *a += b;
        }
    }
    let e = |i: usize| Estimate::proportion(c[i], nsim);
    Ok(TwoArmCharacteristics {
        xi,
        tau,
        mode,
        nsim,
        local_h01: e(0),
        local_h02: e(1),
        local_h12: e(2),
        only_h01: e(3),
        only_h02: e(4),
        both: e(5),
        any: e(6),
        fwer: e(7),
    })
}

/// FWER of testing both hypotheses at nominal `alpha` with no closure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FwerPoint {
    pub tau: f64,
    pub simulated: Estimate,
    /// `1 − Φ₂(c, c; ½√(1−τ))` with `c = Φ⁻¹(1−α)`.
    pub oracle: f64,
}

pub fn naive_fwer(tau: f64, alpha: f64) -> f64 {
    let c = normal_quantile(1.0 - alpha);
    1.0 - bvn_cdf(c, c, 0.5 * (1.0 - tau).sqrt())
}

pub fn fwer_sweep(taus: &[f64], alpha: f64, nsim: u64, seed: u64) -> Result<Vec<FwerPoint>> {
    let crit = normal_quantile(1.0 - alpha);
    let streams = Streams::new(seed, "fwer-sweep");
    taus.iter()
        .map(|&tau| {
            check(tau, alpha, nsim)?;
            let (a, b) = (tau.sqrt(), (1.0 - tau).sqrt());
            let parts = chunked(nsim, |range| {
                let mut hits = 0u64;
                for rep in range {
                    let mut rng = streams.replicate(rep);
                    let (z11, z12, z2) = draw(&mut rng, (0.0, 0.0, 0.0), 0.5);
                    hits += (a * z11 + b * z12 > crit || z2 > crit) as u64;
                }
                hits
            });
            Ok(FwerPoint {
                tau,
                simulated: Estimate::proportion(parts.iter().sum(), nsim),
                oracle: naive_fwer(tau, alpha),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPowerRow {
    pub z: f64,
    pub conditional_error: f64,
    /// `P(reject H_{0,12} | z)` for each `ξ` configuration, Dunnett mode.
    pub reject_intersection: Vec<f64>,
    /// Density of `Z_1^(1)` at `z` for each configuration.
    pub density: Vec<f64>,
}

/// Exact conditional rejection probability of the intersection and the
/// stage-1 density over a grid of `z`.
pub fn conditional_power_curve(
    tau: f64,
    alpha: f64,
    configurations: &[[f64; 2]],
    z_grid: &[f64],
) -> Result<Vec<ConditionalPowerRow>> {
    check(tau, alpha, 1)?;
    z_grid
        .iter()
        .map(|&z| {
            let mut reject = Vec::with_capacity(configurations.len());
            let mut density = Vec::with_capacity(configurations.len());
            let mut level = 0.0;
            for xi in configurations {
                let state = TwoArmAddition::new(tau, alpha, z, xi[0], xi[1])?;
                level = state.conditional_error();
                reject.push(intersection_rejection_probability(&state));
                density.push(normal_pdf(z - xi[0] * tau.sqrt()));
            }
            if configurations.is_empty() {
                level = TwoArmAddition::new(tau, alpha, z, 0.0, 0.0)?.conditional_error();
            }
            Ok(ConditionalPowerRow { z, conditional_error: level, reject_intersection: reject, density })
        })
        .collect()
}
