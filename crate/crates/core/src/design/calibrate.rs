//! Monte Carlo calibration of the scale constant `C` of a boundary shape.
//!
//! All candidate values of `C` are scored against one bank of null paths, so
//! the estimated rejection probability is an exact step function of `C` on
//! that bank. In the common case (efficacy `u = C·a`, futility either fixed
//! or `C·b` with `b ≥ 0`) each path has a single critical scale above which
//! it no longer rejects, and the root is read off an order statistic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BoundarySet, BoundaryShape, HypothesisSet, RecruitmentPlan, WindowSampler};
use crate::error::{Error, Result};
use crate::rng::{chunked, Streams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    /// Null paths in the calibration bank.
    pub replicates: u64,
    pub seed: u64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings { replicates: 1_000_000, seed: 20_190_601 }
    }
}

/// Null Z-paths `z[(p * arms + k) * width + w]` over the analyses after
/// `from`, built from post-`from` data only.
#[derive(Clone, Debug)]
pub(crate) struct PathBank {
    pub arms: usize,
    pub width: usize,
    pub paths: usize,
    z: Vec<f64>,
}

impl PathBank {
    pub fn null(plan: &RecruitmentPlan, from: usize, replicates: u64, streams: &Streams) -> Self {
        let sampler = WindowSampler::new(plan, from);
        let stride = sampler.arms * sampler.width;
        let theta = vec![0.0; sampler.arms];
        let parts = chunked(replicates, |range| {
            let mut e = vec![0.0; sampler.normals()];
            let mut out = vec![0.0; stride * (range.end - range.start) as usize];
            for (i, rep) in range.enumerate() {
                let mut rng = streams.replicate(rep);
                sampler.draw(&mut rng, &mut e);
                sampler.z_paths(&e, &theta, &mut out[i * stride..(i + 1) * stride]);
            }
            out
        });
        PathBank { arms: sampler.arms, width: sampler.width, paths: replicates as usize, z: parts.concat() }
    }

    #[inline]
    pub fn stride(&self) -> usize {
        self.arms * self.width
    }

    #[inline]
    pub fn path(&self, p: usize) -> &[f64] {
        &self.z[p * self.stride()..(p + 1) * self.stride()]
    }
}

/// Affine map from bank statistics to the scale the bounds live on, plus
/// the arms allowed to reject at all.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ArmView {
    pub width: usize,
    /// `k * width + w`
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
    pub eligible: u32,
}

impl ArmView {
    pub fn identity(arms: usize, width: usize) -> Self {
        ArmView {
            width,
            offset: vec![0.0; arms * width],
            scale: vec![1.0; arms * width],
            eligible: (1u32 << arms) - 1,
        }
    }

    #[inline]
    fn x(&self, path: &[f64], k: usize, w: usize) -> f64 {
        let i = k * self.width + w;
        self.offset[i] + self.scale[i] * path[i]
    }
}

/// Futility bounds used while solving for `C`.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Futility<'a> {
    /// `l = C·b`, solved jointly with the efficacy bounds.
    Scaled(&'a [f64]),
    /// Fixed lower bounds.
    Fixed(&'a [f64]),
}

/// Does hypothesis `mask` reject on this path? Binding futility, final
/// analysis efficacy-only.
pub(crate) fn rejects(path: &[f64], view: &ArmView, mask: u32, upper: &[f64], lower: &[f64]) -> bool {
    let width = view.width;
    let mut bits = mask & view.eligible;
    while bits != 0 {
        let k = bits.trailing_zeros() as usize;
        for w in 0..width {
            let x = view.x(path, k, w);
            if x > upper[w] {
                return true;
            }
            if w + 1 < width && x < lower[w] {
                break;
            }
        }
        bits &= bits - 1;
    }
    false
}

pub(crate) fn rejection_count(bank: &PathBank, view: &ArmView, mask: u32, upper: &[f64], lower: &[f64]) -> u64 {
    (0..bank.paths)
        .into_par_iter()
        .with_min_len(1024)
        .filter(|&p| rejects(bank.path(p), view, mask, upper, lower))
        .count() as u64
}

/// Largest `C` at which the path still rejects, when the rejection set in
/// `C` is a half-line. `None` if the futility coefficients rule that out.
fn path_score(path: &[f64], view: &ArmView, mask: u32, a: &[f64], futility: Futility) -> f64 {
    let width = view.width;
    let mut best = f64::NEG_INFINITY;
    let mut bits = mask & view.eligible;
    while bits != 0 {
        let k = bits.trailing_zeros() as usize;
        match futility {
            Futility::Fixed(l) => {
                for w in 0..width {
                    let x = view.x(path, k, w);
                    best = best.max(x / a[w]);
                    if w + 1 < width && x < l[w] {
                        break;
                    }
                }
            }
            Futility::Scaled(b) => {
                // survival cap from earlier analyses
                let mut cap = f64::INFINITY;
                for w in 0..width {
                    let x = view.x(path, k, w);
                    best = best.max((x / a[w]).min(cap));
                    if w + 1 == width {
                        break;
                    }
                    if b[w] > 0.0 {
                        cap = cap.min(x / b[w]);
                    } else if x < 0.0 {
                        break;
                    }
                }
            }
        }
        bits &= bits - 1;
    }
    best
}

fn monotone(futility: Futility, width: usize) -> bool {
    match futility {
        Futility::Fixed(_) => true,
        Futility::Scaled(b) => b[..width - 1].iter().all(|&v| v >= 0.0),
    }
}

fn fail(mask: u32, reason: impl Into<String>) -> Error {
    Error::Calibration { hypothesis: HypothesisSet::from_mask(mask).to_string(), reason: reason.into() }
}

/// Solve for the scale `C` so that hypothesis `mask` rejects on a fraction
/// `level` of the bank. Among all solutions `hint` is preferred when it is
/// one. Returns `-inf` for `level ≥ 1` and `+inf` for `level ≤ 0`.
pub(crate) fn solve_scale(
    bank: &PathBank,
    view: &ArmView,
    mask: u32,
    a: &[f64],
    futility: Futility,
    level: f64,
    hint: Option<f64>,
) -> Result<f64> {
    if level.is_nan() {
        return Err(fail(mask, "target level is NaN"));
    }
    if level >= 1.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if level <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let n = bank.paths;
    let target = level * n as f64;
    if target < 0.5 {
        return Err(Error::NoiseFloor { level, replicates: n as u64 });
    }
    let q = (target.round() as usize).min(n);
    let scaled = matches!(futility, Futility::Scaled(_));

    if !monotone(futility, bank.width) {
        return bisect(bank, view, mask, a, futility, q, hint);
    }

    let mut scores: Vec<f64> = (0..n)
        .into_par_iter()
        .with_min_len(1024)
        .map(|p| path_score(bank.path(p), view, mask, a, futility))
        .collect();
    // descending order statistics s_(q) and s_(q+1)
    let (_, kth, tail) = scores.select_nth_unstable_by(q - 1, |x, y| y.total_cmp(x));
    let hi = *kth;
    let lo = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return Err(fail(mask, format!("fewer than {q} of {n} null paths can reject at any scale")));
    }
    let lo = if scaled { lo.max(0.0) } else { lo };
    if scaled && hi <= 0.0 {
        return Err(fail(mask, format!("level {level} not reachable with a nonnegative scale")));
    }
    if let Some(h) = hint {
        if h >= lo && h < hi {
            return Ok(h);
        }
    }
    if lo >= hi {
        return Ok(hi);
    }
    if lo == f64::NEG_INFINITY {
        return Ok(hi - 1.0 - hi.abs());
    }
    Ok(0.5 * (lo + hi))
}

fn bisect(
    bank: &PathBank,
    view: &ArmView,
    mask: u32,
    a: &[f64],
    futility: Futility,
    q: usize,
    hint: Option<f64>,
) -> Result<f64> {
    let Futility::Scaled(b) = futility else { unreachable!("fixed futility is monotone") };
    let count = |c: f64| {
        let upper: Vec<f64> = a.iter().map(|v| c * v).collect();
        let lower: Vec<f64> = b.iter().map(|v| c * v).collect();
        rejection_count(bank, view, mask, &upper, &lower) as usize
    };
    if let Some(h) = hint {
        if h >= 0.0 && count(h) == q {
            return Ok(h);
        }
    }
    if count(0.0) < q {
        return Err(fail(mask, "level not reachable with a nonnegative scale"));
    }
    let mut hi = 1.0;
    let mut expansions = 0;
    while count(hi) > q {
        hi *= 2.0;
        expansions += 1;
        if expansions > 40 {
            return Err(fail(mask, format!("no upper bracket found up to C = {hi}")));
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count(mid) > q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Bounds for one intersection hypothesis with the given arms, at `level`
/// under the global null. With `shared_futility` only the efficacy scale is
/// solved; otherwise efficacy and futility scale together.
pub fn calibrate_boundaries(
    plan: &RecruitmentPlan,
    m: HypothesisSet,
    shape: BoundaryShape,
    level: f64,
    shared_futility: Option<&[f64]>,
    settings: &CalibrationSettings,
) -> Result<BoundarySet> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("level must lie in (0, 1), got {level}")));
    }
    if !m.is_subset_of((1u32 << plan.arms()) - 1) {
        return Err(Error::domain(format!("hypothesis {m} names arms beyond the {} in the plan", plan.arms())));
    }
    if let Some(l) = shared_futility {
        if l.len() != plan.stages() {
            return Err(Error::Dimension { expected: plan.stages(), got: l.len() });
        }
    }
    let bank = PathBank::null(plan, 0, settings.replicates, &Streams::new(settings.seed, "calibration"));
    let view = ArmView::identity(plan.arms(), plan.stages());
    let (a, b) = shape.grid(0, plan.stages());
    calibrate_on_bank(&bank, &view, m.mask(), &a, &b, level, shared_futility, None)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn calibrate_on_bank(
    bank: &PathBank,
    view: &ArmView,
    mask: u32,
    a: &[f64],
    b: &[f64],
    level: f64,
    shared_futility: Option<&[f64]>,
    hint: Option<f64>,
) -> Result<BoundarySet> {
    let futility = match shared_futility {
        Some(l) => Futility::Fixed(l),
        None => Futility::Scaled(b),
    };
    let c = solve_scale(bank, view, mask, a, futility, level, hint)?;
    let upper = a.iter().map(|v| c * v).collect();
    let lower = match shared_futility {
        Some(l) => l.to_vec(),
        None => b.iter().map(|v| c * v).collect(),
    };
    Ok(BoundarySet { upper, lower, level, scale: c })
}
