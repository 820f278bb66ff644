//! Run configuration: one TOML file with a section per command.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use mams_core::amend::{DroppedArms, ShapeTime};
use mams_core::design::{BoundaryShape, CalibrationSettings, StopRule};

pub const SCHEMA_VERSION: u32 = 1;

/// Configuration problems; reported with exit code 2.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Invalid(msg.into()).into())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: Option<u64>,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    pub amend: Option<AmendSection>,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub sweep_fwer: SweepSection,
    #[serde(default)]
    pub cond_power: CondPowerSection,
    #[serde(default)]
    pub reproduce: ReproduceSection,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base: PathBuf,
}

/// Design template. Defaults give the three-analysis, two-arm triangular
/// design with 10 patients per group per stage.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSection {
    pub arms: usize,
    pub stages: usize,
    pub n: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub shape: BoundaryShape,
    pub stop_rule: StopRule,
    /// Cumulative recruitment per group and analysis in units of `n`,
    /// control first. Overrides `arms` and `stages`.
    pub ratios: Option<Vec<Vec<f64>>>,
}

impl Default for DesignSection {
    fn default() -> Self {
        DesignSection {
            arms: 2,
            stages: 3,
            n: 10.0,
            sigma: 1.0,
            alpha: 0.05,
            shape: BoundaryShape::Triangular,
            stop_rule: StopRule::StopOnFirst,
            ratios: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub replicates: Option<u64>,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
}

impl CalibrationSection {
    pub fn settings(&self, seed: u64) -> Result<CalibrationSettings> {
        let replicates = self.replicates.unwrap_or(CalibrationSettings::default().replicates);
        if replicates == 0 {
            return invalid("calibration.replicates must be at least 1");
        }
        Ok(CalibrationSettings { replicates, seed: self.seed.unwrap_or(seed) })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmendSection {
    /// Saved closed-test document.
    pub design: PathBuf,
    /// Cumulative Z-statistics through the interim, one row per analysis.
    pub interim: Vec<Vec<f64>>,
    #[serde(default)]
    pub new_arms: usize,
    /// Defaults to the shape of the saved design.
    pub shape: Option<BoundaryShape>,
    #[serde(default)]
    pub time: ShapeTime,
    #[serde(default)]
    pub dropped: DroppedArms,
    /// Full amended recruitment, control first, every analysis. By default
    /// new arms recruit like the existing ones from the next stage.
    pub ratios: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// Closed-test or amended-design document. Without one, the `[design]`
    /// template is calibrated first.
    pub design: Option<PathBuf>,
    #[serde(default)]
    pub theta: Vec<Vec<Effect>>,
    pub nsim: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub alpha: f64,
    pub tau: Option<Vec<f64>>,
    pub nsim: Option<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { alpha: 0.05, tau: None, nsim: None }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CondPowerSection {
    pub tau: f64,
    pub alpha: f64,
    /// Drift pairs `(ξ₁, ξ₂)`.
    pub xi: Vec<[Effect; 2]>,
    pub z_from: f64,
    pub z_to: f64,
    pub z_step: f64,
}

impl Default for CondPowerSection {
    fn default() -> Self {
        let d = || Effect::Named("delta-two-arm".into());
        let zero = || Effect::Value(0.0);
        CondPowerSection {
            tau: 0.5,
            alpha: 0.05,
            xi: vec![[zero(), zero()], [d(), zero()], [zero(), d()]],
            z_from: -3.0,
            z_to: 5.0,
            z_step: 0.05,
        }
    }
}

impl CondPowerSection {
    pub fn z_grid(&self) -> Result<Vec<f64>> {
        if !(self.z_step > 0.0) || !(self.z_to >= self.z_from) {
            return invalid(format!(
                "cond_power z grid needs z_step > 0 and z_to >= z_from, got {}..{} by {}",
                self.z_from, self.z_to, self.z_step
            ));
        }
        let steps = ((self.z_to - self.z_from) / self.z_step + 1e-9).floor() as usize;
        Ok((0..=steps).map(|i| self.z_from + self.z_step * i as f64).collect())
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproduceSection {
    pub table: Option<String>,
    pub nsim: Option<u64>,
    pub inner_replicates: Option<u64>,
}

/// An effect given as a number or as one of the named effect sizes.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Effect {
    Value(f64),
    Named(String),
}

impl Effect {
    pub fn resolve(&self) -> Result<f64> {
        match self {
            Effect::Value(v) if v.is_finite() => Ok(*v),
            Effect::Value(v) => invalid(format!("effect {v} is not finite")),
            Effect::Named(s) => match s.as_str() {
                "delta-two-arm" => Ok(mams_core::delta_two_arm()),
                "delta-mams" => Ok(mams_core::delta_mams()),
                other => invalid(format!("unknown effect name {other:?}; use a number, \"delta-two-arm\" or \"delta-mams\"")),
            },
        }
    }
}

pub fn resolve_all(effects: &[Effect]) -> Result<Vec<f64>> {
    effects.iter().map(Effect::resolve).collect()
}

impl RunConfig {
    /// Built-in defaults, used when no `--config` is given.
    pub fn template() -> Self {
        RunConfig { schema_version: SCHEMA_VERSION, ..Default::default() }
    }

    pub fn parse(text: &str, base: PathBuf) -> Result<Self> {
        let mut config: RunConfig = match toml::from_str(text) {
            Ok(c) => c,
            Err(e) => return invalid(format!("malformed config: {e}")),
        };
        if config.schema_version != SCHEMA_VERSION {
            return invalid(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                config.schema_version
            ));
        }
        config.base = base;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return invalid(format!("cannot read config {}: {e}", path.display())),
        };
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base).with_context(|| format!("in {}", path.display()))
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Read a referenced document; a missing file is a validation error.
    pub fn read_document(&self, p: &Path) -> Result<(PathBuf, String)> {
        let path = self.resolve_path(p);
        match fs::read_to_string(&path) {
            Ok(t) => Ok((path, t)),
            Err(e) => invalid(format!("cannot read design document {}: {e}", path.display())),
        }
    }
}

pub fn check_nsim(nsim: u64) -> Result<u64> {
    if nsim == 0 {
        bail!(Invalid("nsim must be at least 1".into()));
    }
    Ok(nsim)
}
