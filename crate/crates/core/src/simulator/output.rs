use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::OperatingCharacteristics;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Label(String),
    /// Printed to two decimals in rounded mode.
    Probability(f64),
    /// Patient counts, printed to the nearest patient in rounded mode.
    Patients(f64),
    /// Always printed in full.
    Value(f64),
    Missing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub id: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(id: impl Into<String>, columns: &[&str]) -> Self {
        Table { id: id.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Look up a numeric cell by row label and column name.
    pub fn value(&self, row_label: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|n| n == column)?;
        let row = self.rows.iter().find(|r| matches!(&r[0], Cell::Label(l) if l == row_label))?;
        match row[c] {
            Cell::Probability(v) | Cell::Patients(v) | Cell::Value(v) => Some(v),
            _ => None,
        }
    }

    fn cells(&self, row: &[Cell], rounded: bool) -> Vec<String> {
        row.iter()
            .map(|c| match c {
                Cell::Label(s) => s.clone(),
                Cell::Probability(v) if rounded => format!("{v:.2}"),
                Cell::Patients(v) if rounded => format!("{v:.0}"),
                Cell::Probability(v) | Cell::Patients(v) | Cell::Value(v) => format!("{v:?}"),
                Cell::Missing => "NA".into(),
            })
            .collect()
    }

    /// Comma-separated text. `rounded` matches printed precision; otherwise
    /// every float is written in its shortest exact form.
    pub fn to_csv(&self, rounded: bool) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(self.cells(row, rounded)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    /// Aligned plain-text rendering for terminals.
    pub fn render(&self) -> String {
        let mut grid = vec![self.columns.clone()];
        grid.extend(self.rows.iter().map(|r| self.cells(r, true)));
        let widths: Vec<usize> =
            (0..self.columns.len()).map(|c| grid.iter().map(|r| r.get(c).map_or(0, |s| s.len())).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for r in &grid {
            for (c, cell) in r.iter().enumerate() {
                let _ = write!(out, "{:>w$}  ", cell, w = widths[c]);
            }
            out.truncate(out.trim_end().len());
            out.push('\n');
        }
        out
    }
}

pub fn write_csv(table: &Table, path: &Path, rounded: bool) -> Result<()> {
    std::fs::write(path, table.to_csv(rounded))?;
    Ok(())
}

/// Raw operating characteristics, one row per scenario. Column names follow
/// the struct fields, with per-arm and per-analysis suffixes.
pub fn oc_table(id: &str, rows: &[OperatingCharacteristics]) -> Table {
    let Some(first) = rows.first() else {
        return Table::new(id, &[]);
    };
    let arms = first.theta.len();
    let stages = first.stop_efficacy.len();
    let mut columns: Vec<String> = vec!["theta".into(), "nsim".into()];
    columns.extend((1..=arms).map(|k| format!("reject_{k}")));
    columns.extend((1..=arms).map(|k| format!("reject_se_{k}")));
    columns.extend((0..=arms).map(|r| format!("reject_count_{r}")));
    columns.extend(["fwer", "fwer_se", "expected_n", "expected_n_se", "prior_n", "max_n"].map(String::from));
    columns.extend((1..=stages).map(|j| format!("stop_efficacy_{j}")));
    columns.extend((1..=stages).map(|j| format!("stop_futility_{j}")));
    let mut table = Table { id: id.into(), columns, rows: Vec::new() };
    for oc in rows {
        let theta = oc.theta.iter().map(|t| format!("{t:?}")).collect::<Vec<_>>().join(";");
        let mut row = vec![Cell::Label(theta), Cell::Value(oc.nsim as f64)];
        row.extend(oc.reject.iter().map(|e| Cell::Probability(e.value)));
        row.extend(oc.reject.iter().map(|e| Cell::Value(e.se)));
        row.extend(oc.reject_count.iter().map(|&p| Cell::Probability(p)));
        row.extend([
            Cell::Probability(oc.fwer.value),
            Cell::Value(oc.fwer.se),
            Cell::Patients(oc.expected_n.value),
            Cell::Value(oc.expected_n.se),
            Cell::Patients(oc.prior_n),
            Cell::Patients(oc.max_n),
        ]);
        row.extend(oc.stop_efficacy.iter().map(|&p| Cell::Probability(p)));
        row.extend(oc.stop_futility.iter().map(|&p| Cell::Probability(p)));
        table.rows.push(row);
    }
    table
}

/// What produced a set of output files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub table: Option<String>,
    pub seed: u64,
    /// Whether the seed was drawn from entropy rather than given.
    pub seed_from_entropy: bool,
    pub nsim: Option<u64>,
    /// SHA-256 of the input design document, if any.
    pub design_hash: Option<String>,
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
    pub threads: usize,
    pub version: String,
}

impl Manifest {
    pub fn hash(bytes: &[u8]) -> String {
        hex::encode(Sha256::digest(bytes))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| crate::Error::Document(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}
