//! TOML documents for calibrated and amended designs.
//!
//! Floats are written in shortest round-trip form, so parsing a document
//! gives back the exact design that was saved.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::amend::AmendedDesign;
use crate::design::ClosedTest;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    schema_version: u32,
    kind: String,
    design: T,
}

#[derive(Deserialize)]
struct Header {
    schema_version: Option<u32>,
    kind: Option<String>,
}

fn write<T: Serialize>(kind: &str, design: &T) -> Result<String> {
    let env = Envelope { schema_version: SCHEMA_VERSION, kind: kind.into(), design };
    toml::to_string(&env).map_err(|e| Error::Document(e.to_string()))
}

fn read<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T> {
    let header: Header = toml::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
    match header.schema_version {
        None => return Err(Error::Document("missing schema_version".into())),
        Some(SCHEMA_VERSION) => {}
        Some(v) => return Err(Error::Document(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}"))),
    }
    match header.kind.as_deref() {
        Some(k) if k == kind => {}
        Some(k) => return Err(Error::Document(format!("document holds a {k}, expected a {kind}"))),
        None => return Err(Error::Document("missing kind".into())),
    }
    let env: Envelope<T> = toml::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
    Ok(env.design)
}

pub const CLOSED_TEST: &str = "closed-test";
pub const AMENDED_DESIGN: &str = "amended-design";

pub fn closed_test_to_toml(test: &ClosedTest) -> Result<String> {
    write(CLOSED_TEST, test)
}

pub fn closed_test_from_toml(text: &str) -> Result<ClosedTest> {
    let test: ClosedTest = read(CLOSED_TEST, text)?;
    test.validate()?;
    Ok(test)
}

pub fn amended_to_toml(design: &AmendedDesign) -> Result<String> {
    write(AMENDED_DESIGN, design)
}

pub fn amended_from_toml(text: &str) -> Result<AmendedDesign> {
    let design: AmendedDesign = read(AMENDED_DESIGN, text)?;
    design.base.validate()?;
    Ok(design)
}

/// Kind recorded in a document, without parsing the design.
pub fn document_kind(text: &str) -> Result<String> {
    let header: Header = toml::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
    header.kind.ok_or_else(|| Error::Document("missing kind".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{build_closed_test, BoundaryShape, CalibrationSettings, RecruitmentPlan, StopRule};

    fn small() -> ClosedTest {
        let plan = RecruitmentPlan::equal_allocation(10.0, 1.0, 2, 3).unwrap();
        let settings = CalibrationSettings { replicates: 20_000, seed: 4 };
        build_closed_test(&plan, BoundaryShape::Triangular, 0.05, StopRule::StopOnFirst, &settings).unwrap()
    }

    #[test]
    fn closed_test_round_trip_is_exact() {
        let t = small();
        let text = closed_test_to_toml(&t).unwrap();
        assert_eq!(closed_test_from_toml(&text).unwrap(), t);
        assert_eq!(document_kind(&text).unwrap(), CLOSED_TEST);
    }

    #[test]
    fn schema_version_is_required() {
        let text = closed_test_to_toml(&small()).unwrap();
        let stripped: String = text.lines().filter(|l| !l.starts_with("schema_version")).collect::<Vec<_>>().join("\n");
        assert!(matches!(closed_test_from_toml(&stripped), Err(Error::Document(_))));
        let bumped = text.replace("schema_version = 1", "schema_version = 99");
        assert!(matches!(closed_test_from_toml(&bumped), Err(Error::Document(_))));
        assert!(amended_from_toml(&text).is_err());
    }
}
