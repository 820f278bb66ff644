//! Monte Carlo operating characteristics.
//!
//! Stagewise group sums are drawn from their exact normal law and turned
//! into Z-statistics; patient-level data are never generated. Every
//! replicate owns a counter-based stream and chunk tallies are folded in
//! index order, so results do not depend on the thread count.

mod comparators;
mod output;
mod tables;
mod two_arm;

pub use comparators::{comparator_restart, comparator_separate_trials, SeparateTrials};
pub use output::{oc_table, write_csv, Cell, Manifest, Table};
pub use tables::{
    example_amended, example_amendment, example_design, example_plan, label, reproduce, table_1, table_2, table_3,
    table_4, table_5, table_6, table_p1, figure_1, figure_2, two_stage_design, ReproduceOptions, TableId, EXAMPLE_ALPHA,
    EXAMPLE_INTERIM, FIGURE_TAU, P1_ROWS, T3_ROWS, T4_ROWS, T5_ROWS,
};
pub use two_arm::{
    conditional_power_curve, fwer_sweep, naive_fwer, simulate_two_arm, ConditionalPowerRow, FwerPoint, TwoArmCharacteristics,
};

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::amend::{amend_with_banks, AmendedDesign, AmendmentBanks, AmendmentPlan};
use crate::design::{
    ArmView, CalibrationSettings, ClosedTest, InterimState, RuleState, SequentialRule, StopReason, WindowSampler,
};
use crate::error::{Error, Result};
use crate::estimate::Estimate;
use crate::rng::{chunked, compensated_sum, Streams};

/// Simulated behaviour of a design under one effect configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub theta: Vec<f64>,
    pub nsim: u64,
    /// Global rejection probability of each elementary hypothesis.
    pub reject: Vec<Estimate>,
    /// `P(exactly r rejections)`, `r = 0..=arms`.
    pub reject_count: Vec<f64>,
    /// Probability of rejecting at least one hypothesis with `θ_k ≤ 0`.
    pub fwer: Estimate,
    /// Patients recruited in the simulated part of the trial.
    pub expected_n: Estimate,
    /// Patients recruited before the simulated part (not in `expected_n`).
    pub prior_n: f64,
    /// Largest possible total, including `prior_n`.
    pub max_n: f64,
    /// Probability of stopping for efficacy at each simulated analysis.
    pub stop_efficacy: Vec<f64>,
    pub stop_futility: Vec<f64>,
}

/// One simulated trial, reduced to what the tallies need.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Replicate {
    pub global: u32,
    pub stop: usize,
    pub reason: StopReason,
    pub patients: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct Tally {
    n: u64,
    reject: Vec<u64>,
    counts: Vec<u64>,
    fwer: u64,
    sum_n: f64,
    sum_n2: f64,
    stop_efficacy: Vec<u64>,
    stop_futility: Vec<u64>,
}

impl Tally {
    pub fn new(arms: usize, width: usize) -> Self {
        Tally {
            n: 0,
            reject: vec![0; arms],
            counts: vec![0; arms + 1],
            fwer: 0,
            sum_n: 0.0,
            sum_n2: 0.0,
            stop_efficacy: vec![0; width],
            stop_futility: vec![0; width],
        }
    }

    pub fn record(&mut self, r: &Replicate, null_mask: u32) {
        self.n += 1;
        for (k, hits) in self.reject.iter_mut().enumerate() {
            *hits += (r.global >> k & 1) as u64;
        }
        self.counts[r.global.count_ones() as usize] += 1;
        self.fwer += (r.global & null_mask != 0) as u64;
        self.sum_n += r.patients;
        self.sum_n2 += r.patients * r.patients;
        match r.reason {
            StopReason::Efficacy => self.stop_efficacy[r.stop] += 1,
            StopReason::Futility => self.stop_futility[r.stop] += 1,
            StopReason::Completed => {}
        }
    }

    pub fn merge(parts: Vec<Tally>) -> Tally {
        let mut it = parts.into_iter();
        let mut acc = it.next().expect("at least one chunk");
        let mut sums = vec![acc.sum_n];
        let mut sums2 = vec![acc.sum_n2];
        for t in it {
            acc.n += t.n;
            add(&mut acc.reject, &t.reject);
            add(&mut acc.counts, &t.counts);
            add(&mut acc.stop_efficacy, &t.stop_efficacy);
            add(&mut acc.stop_futility, &t.stop_futility);
            acc.fwer += t.fwer;
            sums.push(t.sum_n);
            sums2.push(t.sum_n2);
        }
        acc.sum_n = compensated_sum(sums);
        acc.sum_n2 = compensated_sum(sums2);
        acc
    }

    pub fn finish(self, theta: &[f64], prior_n: f64, max_n: f64) -> OperatingCharacteristics {
        let n = self.n;
        let frac = |c: u64| if n == 0 { f64::NAN } else { c as f64 / n as f64 };
        OperatingCharacteristics {
            theta: theta.to_vec(),
            nsim: n,
            reject: self.reject.iter().map(|&h| Estimate::proportion(h, n)).collect(),
            reject_count: self.counts.iter().map(|&c| frac(c)).collect(),
            fwer: Estimate::proportion(self.fwer, n),
            expected_n: Estimate::mean(self.sum_n, self.sum_n2, n),
            prior_n,
            max_n,
            stop_efficacy: self.stop_efficacy.iter().map(|&c| frac(c)).collect(),
            stop_futility: self.stop_futility.iter().map(|&c| frac(c)).collect(),
        }
    }
}

fn add(acc: &mut [u64], other: &[u64]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a += b;
    }
}

pub(crate) fn null_mask(theta: &[f64]) -> u32 {
    theta.iter().enumerate().filter(|(_, &t)| t <= 0.0).fold(0, |m, (k, _)| m | 1 << k)
}

fn check_theta(theta: &[f64], arms: usize) -> Result<()> {
    if theta.len() != arms {
        return Err(Error::Dimension { expected: arms, got: theta.len() });
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::domain("effects must be finite"));
    }
    Ok(())
}

fn check_nsim(nsim: u64) -> Result<()> {
    if nsim == 0 {
        return Err(Error::domain("nsim must be at least 1"));
    }
    Ok(())
}

/// Effect configurations to run, with the replicate count and master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGrid {
    pub thetas: Vec<Vec<f64>>,
    pub nsim: u64,
    pub seed: u64,
}

/// Anything whose operating characteristics can be simulated.
pub trait Simulate: Sync {
    fn arms(&self) -> usize;

    fn operating_characteristics(&self, theta: &[f64], nsim: u64, seed: u64) -> Result<OperatingCharacteristics>;
}

/// Every scenario uses the same replicate streams, so differences between
/// rows are not blurred by independent noise.
pub fn simulate_design<D: Simulate + ?Sized>(design: &D, grid: &ScenarioGrid) -> Result<Vec<OperatingCharacteristics>> {
    grid.thetas.iter().map(|t| design.operating_characteristics(t, grid.nsim, grid.seed)).collect()
}

/// Runs a closed test from its first analysis, one replicate at a time.
pub(crate) struct Runner {
    sampler: WindowSampler,
    rule: SequentialRule,
    e: Vec<f64>,
    z: Vec<f64>,
}

impl Runner {
    pub fn new(test: &ClosedTest) -> Self {
        let sampler = WindowSampler::new(&test.plan, 0);
        let e = vec![0.0; sampler.normals()];
        let z = vec![0.0; sampler.arms * sampler.width];
        Runner { rule: test.rule(), sampler, e, z }
    }

    pub fn run(&mut self, rng: &mut impl rand::Rng, theta: &[f64]) -> Replicate {
        let s = &self.sampler;
        let width = s.width;
        s.draw(rng, &mut self.e);
        s.z_paths(&self.e, theta, &mut self.z);
        let mut st = RuleState::new((1u32 << s.arms) - 1);
        let mut patients = 0.0;
        for w in 0..width {
            patients += s.recruit(w, st.active);
            let z = &self.z;
            self.rule.step(&mut st, w, |k| z[k * width + w]);
            if st.stop.is_some() {
                break;
            }
        }
        let (stop, reason) = st.stop.expect("last analysis always stops");
        Replicate { global: st.global, stop, reason, patients }
    }
}

impl Simulate for ClosedTest {
    fn arms(&self) -> usize {
        self.plan.arms()
    }

    fn operating_characteristics(&self, theta: &[f64], nsim: u64, seed: u64) -> Result<OperatingCharacteristics> {
        check_theta(theta, self.plan.arms())?;
        check_nsim(nsim)?;
        let streams = Streams::new(seed, "simulate");
        let parts = chunked(nsim, |range| {
            let mut tally = Tally::new(self.plan.arms(), self.plan.stages());
            let mut runner = Runner::new(self);
            let nulls = null_mask(theta);
            for rep in range {
                tally.record(&runner.run(&mut streams.replicate(rep), theta), nulls);
            }
            tally
        });
        Ok(Tally::merge(parts).finish(theta, 0.0, self.plan.max_patients()))
    }
}

/// Simulates the remainder of the amended trial, conditional on the interim
/// data it was built from. `expected_n` counts post-interim patients only.
impl Simulate for AmendedDesign {
    fn arms(&self) -> usize {
        self.plan.arms()
    }

    fn operating_characteristics(&self, theta: &[f64], nsim: u64, seed: u64) -> Result<OperatingCharacteristics> {
        check_theta(theta, self.plan.arms())?;
        check_nsim(nsim)?;
        let streams = Streams::new(seed, "simulate-amended");
        let parts = chunked(nsim, |range| {
            let mut tally = Tally::new(self.arms(), self.width());
            run_amended(self, theta, &streams, range, &mut tally);
            tally
        });
        Ok(Tally::merge(parts).finish(theta, self.interim.patients, self.max_patients()))
    }
}

fn run_amended(design: &AmendedDesign, theta: &[f64], streams: &Streams, range: Range<u64>, tally: &mut Tally) {
    let sampler = WindowSampler::new(&design.plan, design.interim.analysis);
    let mut e = vec![0.0; sampler.normals()];
    let mut z = vec![0.0; sampler.arms * sampler.width];
    let ctx = Continuation::new(design);
    let nulls = null_mask(theta);
    for rep in range {
        let mut rng = streams.replicate(rep);
        sampler.draw(&mut rng, &mut e);
        sampler.z_paths(&e, theta, &mut z);
        tally.record(&ctx.run(design, &z), nulls);
    }
}

/// Precomputed pieces for evaluating continuations of one amended design.
pub(crate) struct Continuation {
    rule: SequentialRule,
    view: ArmView,
    start: RuleState,
}

impl Continuation {
    pub fn new(design: &AmendedDesign) -> Self {
        Continuation { rule: design.rule(), view: design.view(), start: design.initial_state() }
    }

    /// `z[k * width + w]`: post-interim statistics of every arm.
    pub fn run(&self, design: &AmendedDesign, z: &[f64]) -> Replicate {
        let width = self.view.width;
        let mut st = self.start.clone();
        let mut patients = 0.0;
        for w in 0..width {
            patients += design.stage_patients(w, st.active);
            let view = &self.view;
            self.rule.step(&mut st, w, |k| {
                let i = k * width + w;
                view.offset[i] + view.scale[i] * z[i]
            });
            if st.stop.is_some() {
                break;
            }
        }
        let (stop, reason) = st.stop.expect("last analysis always stops");
        Replicate { global: st.global, stop, reason, patients }
    }
}

/// First-analysis behaviour of the original trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterimBehaviour {
    pub continue_past: Estimate,
    pub stop_efficacy: Estimate,
    pub stop_futility: Estimate,
}

/// Unconditional run of the two-phase procedure: the original trial up to
/// `J′`, then, whenever it continues, the fixed amendment applied to the
/// observed interim data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPhaseCharacteristics {
    pub interim: InterimBehaviour,
    /// Over trials that continue past `J′`; `expected_n` includes the
    /// patients recruited before the amendment.
    pub continuing: OperatingCharacteristics,
    /// Over all trials.
    pub overall: OperatingCharacteristics,
}

/// Fixed amendment rule: at analysis `analysis`, add `new_arms` arms that
/// recruit like the others, and recalibrate with `inner` paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmendmentRule {
    pub analysis: usize,
    pub new_arms: usize,
    pub inner: CalibrationSettings,
}

pub fn simulate_two_phase(
    test: &ClosedTest,
    rule: &AmendmentRule,
    theta: &[f64],
    nsim: u64,
    seed: u64,
) -> Result<TwoPhaseCharacteristics> {
    check_nsim(nsim)?;
    let k = test.plan.arms();
    let amendment = AmendmentPlan::add_arms(&test.plan, rule.analysis, rule.new_arms, test.shape)?;
    let total = amendment.plan.arms();
    check_theta(theta, total)?;
    if rule.analysis == 0 || rule.analysis >= test.plan.stages() {
        return Err(Error::domain("amendment analysis must precede the last analysis"));
    }
    let banks = AmendmentBanks::new(test, rule.analysis, &amendment.plan, &rule.inner);
    let jp = rule.analysis;
    let first = WindowSampler::new(&test.plan, 0);
    let later = WindowSampler::new(&amendment.plan, jp);
    let streams = Streams::new(seed, "simulate-two-phase");
    let nulls = null_mask(theta);
    let width = later.width;

    let parts = chunked(nsim, |range| -> Result<(Tally, Tally, [u64; 3])> {
        let mut cont = Tally::new(total, width);
        let mut all = Tally::new(total, jp + width);
        let mut stops = [0u64; 3];
        let mut e1 = vec![0.0; first.normals()];
        let mut z1 = vec![0.0; first.arms * first.width];
        let mut e2 = vec![0.0; later.normals()];
        let mut z2 = vec![0.0; later.arms * later.width];
        for rep in range {
            let mut rng = streams.replicate(rep);
            first.draw(&mut rng, &mut e1);
            later.draw(&mut rng, &mut e2);
            first.z_paths(&e1, &theta[..k], &mut z1);
            let history: Vec<Vec<f64>> =
                (0..jp).map(|j| (0..k).map(|a| z1[a * first.width + j]).collect()).collect();
            let interim = InterimState::observe(test, history)?;
            if let Some(reason) = interim.stopped {
                let global = interim.rejected.iter().enumerate().fold(0u32, |m, (a, &r)| m | (r as u32) << a);
                match reason {
                    StopReason::Efficacy => stops[1] += 1,
                    _ => stops[2] += 1,
                }
                let r = Replicate { global, stop: jp - 1, reason, patients: interim.patients };
                all.record(&r, nulls);
                continue;
            }
            stops[0] += 1;
            let design = amend_with_banks(test, &interim, &amendment, &banks)?;
            later.z_paths(&e2, theta, &mut z2);
            let r = Continuation::new(&design).run(&design, &z2);
            let r = Replicate { patients: r.patients + interim.patients, ..r };
            cont.record(&r, nulls);
            all.record(&Replicate { stop: r.stop + jp, ..r }, nulls);
        }
        Ok((cont, all, stops))
    });
    let mut conts = Vec::new();
    let mut alls = Vec::new();
    let mut stops = [0u64; 3];
    for p in parts {
        let (c, a, s) = p?;
        conts.push(c);
        alls.push(a);
        for i in 0..3 {
            stops[i] += s[i];
        }
    }
    let max_n = amendment.plan.max_patients();
    Ok(TwoPhaseCharacteristics {
        interim: InterimBehaviour {
            continue_past: Estimate::proportion(stops[0], nsim),
            stop_efficacy: Estimate::proportion(stops[1], nsim),
            stop_futility: Estimate::proportion(stops[2], nsim),
        },
        continuing: Tally::merge(conts).finish(theta, 0.0, max_n),
        overall: Tally::merge(alls).finish(theta, 0.0, max_n),
    })
}
