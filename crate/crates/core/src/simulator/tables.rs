//! The worked examples behind each reproducible table and figure.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::output::{Cell, Table};
use super::{
    comparator_restart, comparator_separate_trials, conditional_power_curve, fwer_sweep, simulate_two_arm,
    simulate_two_phase, AmendmentRule, OperatingCharacteristics, Simulate,
};
use crate::amend::{amend_design, AmendedDesign, AmendmentPlan};
use crate::design::{
    build_closed_test, BoundaryShape, CalibrationSettings, ClosedTest, InterimState, RecruitmentPlan, StopRule,
};
use crate::error::{Error, Result};
use crate::twoarm::TwoArmMode;
use crate::{delta_mams, delta_two_arm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TableId {
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
    F1,
    F2,
    /// Unconditional run of the amendment rule, trials continuing past the
    /// first analysis.
    P1,
}

impl TableId {
    pub const ALL: [TableId; 9] =
        [TableId::T1, TableId::T2, TableId::T3, TableId::T4, TableId::T5, TableId::T6, TableId::F1, TableId::F2, TableId::P1];

    /// Replicates used when no override is given.
    pub fn default_nsim(self) -> u64 {
        match self {
            TableId::P1 => 10_000,
            TableId::F2 => 0,
            _ => 1_000_000,
        }
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TableId::ALL.into_iter().find(|t| t.to_string().eq_ignore_ascii_case(s)).ok_or_else(|| {
            let valid: Vec<String> = TableId::ALL.iter().map(|t| t.to_string()).collect();
            Error::domain(format!("unknown table id {s:?}; valid ids: {}", valid.join(", ")))
        })
    }
}

/// Settings for [`reproduce`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproduceOptions {
    pub nsim: Option<u64>,
    pub seed: u64,
    pub calibration: CalibrationSettings,
    /// Calibration paths for each per-replicate amendment in `P1`.
    pub inner_replicates: u64,
}

impl ReproduceOptions {
    pub fn new(seed: u64) -> Self {
        ReproduceOptions {
            nsim: None,
            seed,
            calibration: CalibrationSettings { seed, ..CalibrationSettings::default() },
            inner_replicates: 10_000,
        }
    }
}

pub const EXAMPLE_ALPHA: f64 = 0.05;
pub const EXAMPLE_INTERIM: [f64; 2] = [2.0, 1.5];

/// Three analyses, two arms, ten patients per group per stage, `σ = 1`.
pub fn example_plan() -> RecruitmentPlan {
    RecruitmentPlan::equal_allocation(10.0, 1.0, 2, 3).expect("valid plan")
}

pub fn example_design(settings: &CalibrationSettings) -> Result<ClosedTest> {
    build_closed_test(&example_plan(), BoundaryShape::Triangular, EXAMPLE_ALPHA, StopRule::StopOnFirst, settings)
}

/// Two arms added after the first analysis, recruiting like the others.
pub fn example_amendment() -> AmendmentPlan {
    AmendmentPlan::add_arms(&example_plan(), 1, 2, BoundaryShape::Triangular).expect("valid amendment")
}

pub fn example_amended(test: &ClosedTest, settings: &CalibrationSettings) -> Result<AmendedDesign> {
    let interim = InterimState::observe(test, vec![EXAMPLE_INTERIM.to_vec()])?;
    amend_design(test, &interim, &example_amendment(), settings)
}

/// Two-stage design over `arms` arms with the same per-stage recruitment.
pub fn two_stage_design(arms: usize, settings: &CalibrationSettings) -> Result<ClosedTest> {
    let plan = RecruitmentPlan::equal_allocation(10.0, 1.0, arms, 2)?;
    build_closed_test(&plan, BoundaryShape::Triangular, EXAMPLE_ALPHA, StopRule::StopOnFirst, settings)
}

fn theta(pattern: &[u8], delta: f64) -> Vec<f64> {
    pattern.iter().map(|&p| p as f64 * delta).collect()
}

pub fn label(pattern: &[u8]) -> String {
    let parts: Vec<&str> = pattern.iter().map(|&p| if p == 1 { "delta" } else { "0" }).collect();
    format!("({})", parts.join(";"))
}

pub const T3_ROWS: [[u8; 4]; 12] = [
    [0, 0, 0, 0],
    [1, 0, 0, 0],
    [0, 1, 0, 0],
    [1, 1, 0, 0],
    [0, 0, 1, 0],
    [1, 0, 1, 0],
    [0, 1, 1, 0],
    [1, 1, 1, 0],
    [0, 0, 1, 1],
    [1, 0, 1, 1],
    [0, 1, 1, 1],
    [1, 1, 1, 1],
];

pub const T4_ROWS: [[u8; 2]; 3] = [[0, 0], [1, 0], [1, 1]];

pub const T5_ROWS: [[u8; 4]; 3] = [[0, 0, 0, 0], [1, 0, 1, 0], [1, 1, 1, 1]];

/// Rows of the unconditional amendment table and of the restart comparator.
pub const P1_ROWS: [[u8; 4]; 9] = [
    [0, 0, 0, 0],
    [1, 0, 0, 0],
    [1, 1, 0, 0],
    [0, 0, 1, 0],
    [1, 0, 1, 0],
    [1, 1, 1, 0],
    [0, 0, 1, 1],
    [1, 0, 1, 1],
    [1, 1, 1, 1],
];

const TWO_ARM_ROWS: [[u8; 2]; 4] = [[0, 0], [1, 0], [0, 1], [1, 1]];

pub const FIGURE_TAU: f64 = 0.5;

fn nsim_for(id: TableId, opts: &ReproduceOptions) -> Result<u64> {
    let n = opts.nsim.unwrap_or(id.default_nsim());
    if n == 0 && id != TableId::F2 {
        return Err(Error::domain("nsim must be at least 1"));
    }
    Ok(n)
}

pub fn reproduce(id: TableId, opts: &ReproduceOptions) -> Result<Table> {
    let nsim = nsim_for(id, opts)?;
    let seed = opts.seed;
    match id {
        TableId::T1 => table_1(nsim, seed),
        TableId::T2 => table_2(nsim, seed),
        TableId::T3 => {
            let test = example_design(&opts.calibration)?;
            let amended = example_amended(&test, &opts.calibration)?;
            table_3(&amended, nsim, seed)
        }
        TableId::T4 => table_4(&example_design(&opts.calibration)?, nsim, seed),
        TableId::T5 => {
            let original = example_design(&opts.calibration)?;
            let additional = two_stage_design(2, &opts.calibration)?;
            table_5(&original, &additional, nsim, seed)
        }
        TableId::T6 => table_6(&two_stage_design(4, &opts.calibration)?, nsim, seed),
        TableId::P1 => {
            let rule = AmendmentRule {
                analysis: 1,
                new_arms: 2,
                inner: CalibrationSettings { replicates: opts.inner_replicates, seed },
            };
            table_p1(&example_design(&opts.calibration)?, &rule, nsim, seed)
        }
        TableId::F1 => figure_1(nsim, seed),
        TableId::F2 => figure_2(),
    }
}

pub fn table_1(nsim: u64, seed: u64) -> Result<Table> {
    let d = delta_two_arm();
    let mut t = Table::new(
        "T1",
        &["xi", "local_h01", "local_h02", "local_h12", "fwer", "local_h01_se", "local_h02_se", "local_h12_se", "fwer_se"],
    );
    for p in &TWO_ARM_ROWS[..3] {
        let xi = theta(p, d);
        let r = simulate_two_arm(FIGURE_TAU, EXAMPLE_ALPHA, [xi[0], xi[1]], TwoArmMode::Dunnett, nsim, seed)?;
        t.push(vec![
            Cell::Label(label(p)),
            Cell::Probability(r.local_h01.value),
            Cell::Probability(r.local_h02.value),
            Cell::Probability(r.local_h12.value),
            Cell::Probability(r.fwer.value),
            Cell::Value(r.local_h01.se),
            Cell::Value(r.local_h02.se),
            Cell::Value(r.local_h12.se),
            Cell::Value(r.fwer.se),
        ]);
    }
    Ok(t)
}

pub fn table_2(nsim: u64, seed: u64) -> Result<Table> {
    let d = delta_two_arm();
    let mut t = Table::new(
        "T2",
        &["scenario", "only_h01", "only_h02", "both", "any", "fwer", "only_h01_se", "only_h02_se", "both_se", "any_se"],
    );
    for mode in [TwoArmMode::Dunnett, TwoArmMode::Gatekeeping] {
        let name = match mode {
            TwoArmMode::Dunnett => "dunnett",
            TwoArmMode::Gatekeeping => "gatekeeping",
        };
        for p in &TWO_ARM_ROWS {
            let xi = theta(p, d);
            let r = simulate_two_arm(FIGURE_TAU, EXAMPLE_ALPHA, [xi[0], xi[1]], mode, nsim, seed)?;
            let only_h02 = match mode {
                TwoArmMode::Dunnett => Cell::Probability(r.only_h02.value),
                TwoArmMode::Gatekeeping => Cell::Missing,
            };
            t.push(vec![
                Cell::Label(format!("{name} {}", label(p))),
                Cell::Probability(r.only_h01.value),
                only_h02,
                Cell::Probability(r.both.value),
                Cell::Probability(r.any.value),
                Cell::Probability(r.fwer.value),
                Cell::Value(r.only_h01.se),
                Cell::Value(r.only_h02.se),
                Cell::Value(r.both.se),
                Cell::Value(r.any.se),
            ]);
        }
    }
    Ok(t)
}

fn reject_columns(arms: usize, n_name: &str, extra: &[&str]) -> Vec<String> {
    let mut c = vec!["theta".to_string()];
    c.extend((1..=arms).map(|k| format!("reject_{k}")));
    c.push(n_name.to_string());
    c.extend(extra.iter().map(|s| s.to_string()));
    c.extend((0..=arms).map(|r| format!("reject_count_{r}")));
    c.extend((1..=arms).map(|k| format!("reject_se_{k}")));
    c.push(format!("{n_name}_se"));
    c
}

fn reject_row(lbl: String, oc: &OperatingCharacteristics, extra: Vec<Cell>) -> Vec<Cell> {
    let mut row = vec![Cell::Label(lbl)];
    row.extend(oc.reject.iter().map(|e| Cell::Probability(e.value)));
    row.push(Cell::Patients(oc.expected_n.value));
    row.extend(extra);
    row.extend(oc.reject_count.iter().map(|&p| Cell::Probability(p)));
    row.extend(oc.reject.iter().map(|e| Cell::Value(e.se)));
    row.push(Cell::Value(oc.expected_n.se));
    row
}

fn with_columns(id: &str, columns: Vec<String>) -> Table {
    Table { id: id.into(), columns, rows: Vec::new() }
}

/// Remainder of the amended example given the observed interim. `expected_n`
/// counts patients after the interim; `prior_n` holds the 30 before it.
pub fn table_3(amended: &AmendedDesign, nsim: u64, seed: u64) -> Result<Table> {
    let d = delta_mams();
    let mut t = with_columns("T3", reject_columns(4, "expected_n", &["prior_n"]));
    for p in &T3_ROWS {
        let oc = amended.operating_characteristics(&theta(p, d), nsim, seed)?;
        let extra = vec![Cell::Patients(oc.prior_n)];
        t.push(reject_row(label(p), &oc, extra));
    }
    Ok(t)
}

pub fn table_4(test: &ClosedTest, nsim: u64, seed: u64) -> Result<Table> {
    let d = delta_mams();
    let mut t = Table::new(
        "T4",
        &["theta", "continue", "stop_efficacy", "stop_futility", "continue_se", "stop_efficacy_se", "stop_futility_se"],
    );
    for p in &T4_ROWS {
        let oc = test.operating_characteristics(&theta(p, d), nsim, seed)?;
        let (e, f) = (oc.stop_efficacy[0], oc.stop_futility[0]);
        let c = 1.0 - e - f;
        let se = |q: f64| (q * (1.0 - q) / nsim as f64).sqrt();
        t.push(vec![
            Cell::Label(label(p)),
            Cell::Probability(c),
            Cell::Probability(e),
            Cell::Probability(f),
            Cell::Value(se(c)),
            Cell::Value(se(e)),
            Cell::Value(se(f)),
        ]);
    }
    Ok(t)
}

pub fn table_5(original: &ClosedTest, additional: &ClosedTest, nsim: u64, seed: u64) -> Result<Table> {
    let d = delta_mams();
    let mut t = Table::new(
        "T5",
        &[
            "theta",
            "reject_1",
            "reject_2",
            "expected_n_1",
            "reject_3",
            "reject_4",
            "expected_n_2",
            "first_reject_count_0",
            "first_reject_count_1",
            "first_reject_count_2",
            "second_reject_count_0",
            "second_reject_count_1",
            "second_reject_count_2",
            "fwer",
            "reject_1_and_3",
            "reject_se_1",
            "reject_se_2",
            "expected_n_1_se",
            "reject_se_3",
            "reject_se_4",
            "expected_n_2_se",
            "fwer_se",
        ],
    );
    for p in &T5_ROWS {
        let r = comparator_separate_trials(original, additional, &theta(p, d), nsim, seed)?;
        let (a, b) = (&r.first, &r.second);
        let mut row = vec![
            Cell::Label(label(p)),
            Cell::Probability(a.reject[0].value),
            Cell::Probability(a.reject[1].value),
            Cell::Patients(a.expected_n.value),
            Cell::Probability(b.reject[0].value),
            Cell::Probability(b.reject[1].value),
            Cell::Patients(b.expected_n.value),
        ];
        row.extend(a.reject_count.iter().map(|&q| Cell::Probability(q)));
        row.extend(b.reject_count.iter().map(|&q| Cell::Probability(q)));
        row.extend([
            Cell::Probability(r.fwer.value),
            Cell::Probability(r.joint_first_arms.value),
            Cell::Value(a.reject[0].se),
            Cell::Value(a.reject[1].se),
            Cell::Value(a.expected_n.se),
            Cell::Value(b.reject[0].se),
            Cell::Value(b.reject[1].se),
            Cell::Value(b.expected_n.se),
            Cell::Value(r.fwer.se),
        ]);
        t.push(row);
    }
    Ok(t)
}

/// Fresh four-arm trial; the 30 patients of the abandoned trial are in
/// `discarded_n`, not in `expected_n`.
pub fn table_6(restart: &ClosedTest, nsim: u64, seed: u64) -> Result<Table> {
    let d = delta_mams();
    let discarded = example_plan().max_patients() / 3.0;
    let mut t = with_columns("T6", reject_columns(4, "expected_n", &["discarded_n", "fwer"]));
    for p in &P1_ROWS {
        let oc = comparator_restart(restart, discarded, &theta(p, d), nsim, seed)?;
        let extra = vec![Cell::Patients(oc.prior_n), Cell::Probability(oc.fwer.value)];
        t.push(reject_row(label(p), &oc, extra));
    }
    Ok(t)
}

/// Trials continuing past the first analysis, with `expected_n` including
/// the first-stage patients. `overall_*` columns cover every trial.
pub fn table_p1(test: &ClosedTest, rule: &AmendmentRule, nsim: u64, seed: u64) -> Result<Table> {
    let d = delta_mams();
    let mut t = with_columns(
        "P1",
        reject_columns(4, "expected_n", &["continue", "overall_fwer", "overall_expected_n", "continuing_nsim"]),
    );
    for p in &P1_ROWS {
        let r = simulate_two_phase(test, rule, &theta(p, d), nsim, seed)?;
        let extra = vec![
            Cell::Probability(r.interim.continue_past.value),
            Cell::Probability(r.overall.fwer.value),
            Cell::Patients(r.overall.expected_n.value),
            Cell::Value(r.continuing.nsim as f64),
        ];
        t.push(reject_row(label(p), &r.continuing, extra));
    }
    Ok(t)
}

/// Inflation of the naive procedure over `τ`, endpoints included.
pub fn figure_1(nsim: u64, seed: u64) -> Result<Table> {
    let mut taus = vec![0.001];
    taus.extend((1..100).map(|i| i as f64 / 100.0));
    taus.push(0.999);
    let mut t = Table::new("F1", &["tau", "fwer", "fwer_se", "oracle", "nominal"]);
    for pt in fwer_sweep(&taus, EXAMPLE_ALPHA, nsim, seed)? {
        t.push(vec![
            Cell::Value(pt.tau),
            Cell::Probability(pt.simulated.value),
            Cell::Value(pt.simulated.se),
            Cell::Value(pt.oracle),
            Cell::Value(EXAMPLE_ALPHA),
        ]);
    }
    Ok(t)
}

/// Conditional error, conditional rejection of the intersection and the
/// stage-1 density against `z`, for each `ξ` configuration. Exact.
pub fn figure_2() -> Result<Table> {
    let d = delta_two_arm();
    let configs: Vec<[f64; 2]> = TWO_ARM_ROWS.iter().map(|p| [p[0] as f64 * d, p[1] as f64 * d]).collect();
    let z: Vec<f64> = (0..=160).map(|i| -3.0 + 0.05 * i as f64).collect();
    let mut columns = vec!["z".to_string(), "conditional_error".to_string()];
    for p in &TWO_ARM_ROWS {
        columns.push(format!("reject_intersection {}", label(p)));
    }
    for p in &TWO_ARM_ROWS {
        columns.push(format!("density {}", label(p)));
    }
    let mut t = with_columns("F2", columns);
    for row in conditional_power_curve(FIGURE_TAU, EXAMPLE_ALPHA, &configs, &z)? {
        let mut cells = vec![Cell::Value(row.z), Cell::Value(row.conditional_error)];
        cells.extend(row.reject_intersection.iter().map(|&v| Cell::Value(v)));
        cells.extend(row.density.iter().map(|&v| Cell::Value(v)));
        t.push(cells);
    }
    Ok(t)
}
