//! Lower-orthant probabilities `P(X <= b)` for `X ~ N(0, R)`.
//!
//! Dimension one and two are exact, three integrates the conditional bivariate
//! probability over the best-conditioned coordinate, and anything larger uses
//! Genz's separation-of-variables integrand on a randomly shifted Richtmyer
//! lattice with a fixed shift seed, so results are reproducible.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bvn::{bvn_cdf, GL20};
use super::{cholesky, normal_cdf, normal_pdf, normal_quantile};

const LATTICE_POINTS: usize = 20_000;
const LATTICE_SHIFTS: usize = 12;
const PRIMES: [f64; 16] = [
    2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0,
];

/// `corr` is row-major `dim × dim`.
pub(crate) fn lower_orthant(b: &[f64], corr: &[f64]) -> f64 {
    let dim = b.len();
    if b.iter().any(|&x| x == f64::NEG_INFINITY) {
        return 0.0;
    }
    // Coordinates with +inf thresholds never bind.
    let keep: Vec<usize> = (0..dim).filter(|&i| b[i] != f64::INFINITY).collect();
    let d = keep.len();
    let sub_b: Vec<f64> = keep.iter().map(|&i| b[i]).collect();
    let sub: Vec<f64> = keep
        .iter()
        .flat_map(|&i| keep.iter().map(move |&j| corr[i * dim + j]))
        .collect();
    match d {
        0 => 1.0,
        1 => normal_cdf(sub_b[0]),
        2 => bvn_cdf(sub_b[0], sub_b[1], sub[1]),
        3 => trivariate(&sub_b, &sub),
        _ => lattice(&sub_b, &sub),
    }
}

fn trivariate(b: &[f64], r: &[f64]) -> f64 {
    let rho = |i: usize, j: usize| r[i * 3 + j];
    // Condition on the coordinate least correlated with the other two.
    let pivot = (0..3)
        .min_by(|&x, &y| {
            let mx = (0..3).filter(|&j| j != x).map(|j| rho(x, j).abs()).fold(0.0, f64::max);
            let my = (0..3).filter(|&j| j != y).map(|j| rho(y, j).abs()).fold(0.0, f64::max);
            mx.total_cmp(&my)
        })
        .unwrap();
    let others: Vec<usize> = (0..3).filter(|&j| j != pivot).collect();
    let (p, q) = (others[0], others[1]);
    let rp = rho(pivot, p);
    let rq = rho(pivot, q);
    if rp.abs() >= 1.0 || rq.abs() >= 1.0 {
        // Degenerate: fall back to the lattice rule which copes with singular R.
        return lattice(b, r);
    }
    let sp = (1.0 - rp * rp).sqrt();
    let sq = (1.0 - rq * rq).sqrt();
    let partial = ((rho(p, q) - rp * rq) / (sp * sq)).clamp(-1.0, 1.0);

    let hi = b[pivot].min(9.0);
    let lo = -9.0f64;
    if hi <= lo {
        return 0.0;
    }
    let panels = ((hi - lo) / 0.25).ceil() as usize;
    let width = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let mid = lo + (i as f64 + 0.5) * width;
        for &(w, x) in &GL20 {
            for sign in [-1.0, 1.0] {
                let t = mid + sign * x * width / 2.0;
                let cond = bvn_cdf((b[p] - rp * t) / sp, (b[q] - rq * t) / sq, partial);
                total += w * width / 2.0 * normal_pdf(t) * cond;
            }
        }
    }
    total.clamp(0.0, 1.0)
}

fn lattice(b: &[f64], r: &[f64]) -> f64 {
    let d = b.len();
    let chol = cholesky(r, d).expect("correlation validated before integration");
    let gen: Vec<f64> = (0..d.saturating_sub(1)).map(|i| PRIMES[i % PRIMES.len()].sqrt().fract()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d76_6e5f_6c61_7474);
    let mut estimates = Vec::with_capacity(LATTICE_SHIFTS);
    let mut y = vec![0.0; d];
    for _ in 0..LATTICE_SHIFTS {
        let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let mut sum = 0.0;
        for n in 1..=LATTICE_POINTS {
            let mut f = 1.0;
            for i in 0..d {
                let t: f64 = (0..i).map(|j| chol[i * d + j] * y[j]).sum();
                let diag = chol[i * d + i];
                let e = if diag > 1e-12 {
                    normal_cdf((b[i] - t) / diag)
                } else if b[i] >= t {
                    1.0
                } else {
                    0.0
                };
                f *= e;
                if f == 0.0 {
                    break;
                }
                if i + 1 < d {
                    let u = (n as f64 * gen[i] + shift[i]).fract();
                    let w = (2.0 * u - 1.0).abs();
                    let v = (w * e).clamp(1e-300, 1.0 - 1e-16);
                    y[i] = normal_quantile(v);
                }
            }
            sum += f;
        }
        estimates.push(sum / LATTICE_POINTS as f64);
    }
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    mean.clamp(0.0, 1.0)
}
