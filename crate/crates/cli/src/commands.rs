use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use log::info;

use mams_core::amend::{amend_design, AmendedDesign, AmendmentPlan, HypothesisClass};
use mams_core::design::{build_closed_test, ClosedTest, InterimState, RecruitmentPlan};
use mams_core::document::{self, AMENDED_DESIGN, CLOSED_TEST};
use mams_core::rng::worker_threads;
use mams_core::simulator::{
    conditional_power_curve, fwer_sweep, oc_table, reproduce, simulate_design, write_csv, Cell, Manifest,
    ReproduceOptions, ScenarioGrid, Table, TableId,
};

use crate::config::{check_nsim, invalid, resolve_all, RunConfig};

/// Settings shared by every command.
pub struct Run {
    pub command: &'static str,
    pub config: RunConfig,
    pub seed: u64,
    pub seed_from_entropy: bool,
    pub nsim: Option<u64>,
    pub table: Option<String>,
    pub out: PathBuf,
    pub quiet: bool,
    started: Instant,
}

impl Run {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        command: &'static str,
        config: RunConfig,
        seed: u64,
        seed_from_entropy: bool,
        nsim: Option<u64>,
        table: Option<String>,
        out: PathBuf,
        quiet: bool,
    ) -> Self {
        Run { command, config, seed, seed_from_entropy, nsim, table, out, quiet, started: Instant::now() }
    }

    fn say(&self, text: &str) {
        if !self.quiet {
            print!("{text}");
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<String> {
        let p = self.path(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        info!("wrote {}", p.display());
        Ok(name.to_string())
    }

    fn csv(&self, name: &str, table: &Table, rounded: bool) -> Result<String> {
        let p = self.path(name);
        write_csv(table, &p, rounded).with_context(|| format!("writing {}", p.display()))?;
        info!("wrote {}", p.display());
        Ok(name.to_string())
    }

    fn manifest(&self, stem: &str, table: Option<String>, nsim: Option<u64>, design_hash: Option<String>, outputs: Vec<String>) -> Result<()> {
        let m = Manifest {
            command: self.command.to_string(),
            table,
            seed: self.seed,
            seed_from_entropy: self.seed_from_entropy,
            nsim,
            design_hash,
            outputs,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
            threads: worker_threads(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        };
        let name = format!("{stem}.manifest.json");
        m.write(&self.path(&name)).with_context(|| format!("writing {name}"))?;
        info!("wrote {}", self.path(&name).display());
        Ok(())
    }
}

fn template_plan(run: &Run) -> Result<RecruitmentPlan> {
    let d = &run.config.design;
    let plan = match &d.ratios {
        Some(r) => RecruitmentPlan::new(d.n, d.sigma, r.clone())?,
        None => RecruitmentPlan::equal_allocation(d.n, d.sigma, d.arms, d.stages)?,
    };
    Ok(plan)
}

fn calibrate_template(run: &Run) -> Result<ClosedTest> {
    let d = &run.config.design;
    let plan = template_plan(run)?;
    let settings = run.config.calibration.settings(run.seed)?;
    info!("calibrating {} intersection tests on {} paths", (1usize << plan.arms()) - 1, settings.replicates);
    Ok(build_closed_test(&plan, d.shape, d.alpha, d.stop_rule, &settings)?)
}

/// Per-hypothesis bounds, one row each, then the shared futility bounds.
pub fn boundary_table(test: &ClosedTest) -> Table {
    let stages = test.plan.stages();
    let mut columns = vec!["hypothesis".to_string(), "level".to_string(), "scale".to_string()];
    columns.extend((1..=stages).map(|j| format!("u_{j}")));
    let mut t = Table { id: "design".into(), columns, rows: Vec::new() };
    for (h, b) in &test.family {
        let mut row = vec![Cell::Label(h.to_string()), Cell::Value(b.level), Cell::Value(b.scale)];
        row.extend(b.upper.iter().map(|&u| Cell::Value(round4(u))));
        t.rows.push(row);
    }
    let mut row = vec![Cell::Label("futility l".into()), Cell::Missing, Cell::Missing];
    row.extend(test.futility.iter().map(|&l| Cell::Value(round4(l))));
    t.rows.push(row);
    t
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

pub fn design(run: &Run) -> Result<()> {
    let test = calibrate_template(run)?;
    let text = document::closed_test_to_toml(&test)?;
    let outputs = vec![run.write("design.toml", &text)?];
    run.say(&boundary_table(&test).render());
    run.manifest("design", None, None, Some(Manifest::hash(text.as_bytes())), outputs)
}

/// Levels of the amended closure, then the conditional errors of the
/// original intersections.
pub fn levels_table(design: &AmendedDesign) -> Table {
    let width = design.width();
    let first = design.interim.analysis + 1;
    let mut columns = vec!["hypothesis".to_string(), "class".to_string(), "level".to_string()];
    columns.extend((first..first + width).map(|j| format!("u_{j}")));
    let mut t = Table { id: "levels".into(), columns, rows: Vec::new() };
    for h in &design.family {
        let class = match h.class {
            HypothesisClass::Existing => "existing",
            HypothesisClass::Added => "added",
            HypothesisClass::Mixed => "mixed",
        };
        let mut row = vec![Cell::Label(h.set.to_string()), Cell::Label(class.into()), Cell::Value(h.level)];
        row.extend(h.upper.iter().map(|&u| Cell::Value(round4(u))));
        t.rows.push(row);
    }
    t
}

pub fn conditional_error_table(design: &AmendedDesign) -> Table {
    let mut t = Table::new("conditional_errors", &["hypothesis", "conditional_error"]);
    for (h, b) in &design.conditional_errors {
        t.push(vec![Cell::Label(h.to_string()), Cell::Value(*b)]);
    }
    t
}

pub fn amend(run: &Run) -> Result<()> {
    let Some(section) = &run.config.amend else {
        return invalid("the amend command needs an [amend] section in the config");
    };
    let (_, text) = run.config.read_document(&section.design)?;
    let test = document::closed_test_from_toml(&text)?;
    let interim = InterimState::observe(&test, section.interim.clone())?;
    let shape = section.shape.unwrap_or(test.shape);
    let mut amendment = match &section.ratios {
        Some(r) => AmendmentPlan {
            new_arms: section.new_arms,
            plan: RecruitmentPlan::new(test.plan.n, test.plan.sigma, r.clone())?,
            shape,
            time: Default::default(),
            dropped: Default::default(),
        },
        None => AmendmentPlan::add_arms(&test.plan, interim.analysis, section.new_arms, shape)?,
    };
    amendment.time = section.time;
    amendment.dropped = section.dropped;
    let settings = run.config.calibration.settings(run.seed)?;
    let amended = amend_design(&test, &interim, &amendment, &settings)?;
    let doc = document::amended_to_toml(&amended)?;
    let levels = levels_table(&amended);
    let errors = conditional_error_table(&amended);
    let outputs = vec![
        run.write("amended.toml", &doc)?,
        run.csv("levels.csv", &levels, false)?,
        run.csv("conditional_errors.csv", &errors, false)?,
    ];
    run.say(&format!("closure of {} hypotheses\n", amended.family.len()));
    run.say(&levels.render());
    run.say(&errors.render());
    run.manifest("amended", None, None, Some(Manifest::hash(text.as_bytes())), outputs)
}

/// Parse a design document of either kind and simulate every scenario.
pub fn simulate_document(text: &str, thetas: Vec<Vec<f64>>, nsim: u64, seed: u64) -> Result<Table> {
    let grid = ScenarioGrid { thetas, nsim, seed };
    let rows = match document::document_kind(text)?.as_str() {
        CLOSED_TEST => simulate_design(&document::closed_test_from_toml(text)?, &grid)?,
        AMENDED_DESIGN => simulate_design(&document::amended_from_toml(text)?, &grid)?,
        other => return invalid(format!("unknown document kind {other:?}")),
    };
    Ok(oc_table("simulate", &rows))
}

pub fn simulate(run: &Run) -> Result<()> {
    let s = &run.config.simulate;
    let nsim = check_nsim(run.nsim.or(s.nsim).unwrap_or(100_000))?;
    let (text, hash) = match &s.design {
        Some(p) => {
            let (_, text) = run.config.read_document(p)?;
            let hash = Manifest::hash(text.as_bytes());
            (text, hash)
        }
        None => {
            let text = document::closed_test_to_toml(&calibrate_template(run)?)?;
            let hash = Manifest::hash(text.as_bytes());
            (text, hash)
        }
    };
    let mut thetas = s.theta.iter().map(|t| resolve_all(t)).collect::<Result<Vec<_>>>()?;
    if thetas.is_empty() {
        let arms = match document::document_kind(&text)?.as_str() {
            AMENDED_DESIGN => document::amended_from_toml(&text)?.arms(),
            _ => document::closed_test_from_toml(&text)?.plan.arms(),
        };
        thetas.push(vec![0.0; arms]);
    }
    let table = simulate_document(&text, thetas, nsim, run.seed)?;
    let outputs = vec![run.csv("simulate.csv", &table, false)?];
    run.say(&table.render());
    run.manifest("simulate", None, Some(nsim), Some(hash), outputs)
}

pub fn sweep_fwer(run: &Run) -> Result<()> {
    let s = &run.config.sweep_fwer;
    let nsim = check_nsim(run.nsim.or(s.nsim).unwrap_or(1_000_000))?;
    let taus = s.tau.clone().unwrap_or_else(|| {
        let mut t = vec![0.001];
        t.extend((1..100).map(|i| i as f64 / 100.0));
        t.push(0.999);
        t
    });
    let mut table = Table::new("sweep_fwer", &["tau", "fwer", "fwer_se", "oracle"]);
    for p in fwer_sweep(&taus, s.alpha, nsim, run.seed)? {
        table.push(vec![Cell::Value(p.tau), Cell::Value(p.simulated.value), Cell::Value(p.simulated.se), Cell::Value(p.oracle)]);
    }
    let outputs = vec![run.csv("sweep_fwer.csv", &table, false)?];
    run.say(&table.render());
    run.manifest("sweep_fwer", None, Some(nsim), None, outputs)
}

pub fn cond_power(run: &Run) -> Result<()> {
    let s = &run.config.cond_power;
    let configs = s
        .xi
        .iter()
        .map(|pair| Ok([pair[0].resolve()?, pair[1].resolve()?]))
        .collect::<Result<Vec<[f64; 2]>>>()?;
    let z = s.z_grid()?;
    let mut columns = vec!["z".to_string(), "conditional_error".to_string()];
    for c in &configs {
        columns.push(format!("reject_intersection ({};{})", c[0], c[1]));
    }
    for c in &configs {
        columns.push(format!("density ({};{})", c[0], c[1]));
    }
    let mut table = Table { id: "cond_power".into(), columns, rows: Vec::new() };
    for row in conditional_power_curve(s.tau, s.alpha, &configs, &z)? {
        let mut cells = vec![Cell::Value(row.z), Cell::Value(row.conditional_error)];
        cells.extend(row.reject_intersection.iter().map(|&v| Cell::Value(v)));
        cells.extend(row.density.iter().map(|&v| Cell::Value(v)));
        table.rows.push(cells);
    }
    let outputs = vec![run.csv("cond_power.csv", &table, false)?];
    run.say(&table.render());
    run.manifest("cond_power", None, None, None, outputs)
}

pub fn reproduce_table(run: &Run) -> Result<()> {
    let r = &run.config.reproduce;
    let Some(id) = run.table.clone().or_else(|| r.table.clone()) else {
        let valid: Vec<String> = TableId::ALL.iter().map(|t| t.to_string()).collect();
        return invalid(format!("reproduce needs --table; valid ids: {}", valid.join(", ")));
    };
    let id: TableId = id.parse()?;
    let mut opts = ReproduceOptions::new(run.seed);
    opts.nsim = run.nsim.or(r.nsim);
    if opts.nsim == Some(0) {
        return invalid("nsim must be at least 1");
    }
    opts.calibration = run.config.calibration.settings(run.seed)?;
    if let Some(inner) = r.inner_replicates {
        opts.inner_replicates = inner;
    }
    let table = reproduce(id, &opts)?;
    let outputs = vec![run.csv(&format!("{id}.csv"), &table, true)?, run.csv(&format!("{id}_raw.csv"), &table, false)?];
    run.say(&table.render());
    let nsim = opts.nsim.unwrap_or(id.default_nsim());
    run.manifest(&id.to_string(), Some(id.to_string()), (nsim > 0).then_some(nsim), None, outputs)
}

pub fn ensure_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}
