//! Default column definitions for the ACS base tasks. ACS code books change
//! between survey years, so these are starting points that a pipeline
//! config may override. High-cardinality code columns (OCCP, POBP) are kept
//! numeric.

use serde::{Deserialize, Serialize};

use super::csv_io::{LabelRule, LabelSource};
use crate::tabular::{ColumnSchema, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseTask {
    #[serde(rename = "ACSIncome")]
    AcsIncome,
    #[serde(rename = "ACSEmployment")]
    AcsEmployment,
}

impl BaseTask {
    pub fn name(self) -> &'static str {
        match self {
            BaseTask::AcsIncome => "ACSIncome",
            BaseTask::AcsEmployment => "ACSEmployment",
        }
    }

    pub fn schema(self) -> Schema {
        match self {
            BaseTask::AcsIncome => acs_income(),
            BaseTask::AcsEmployment => acs_employment(),
        }
    }

    pub fn label_source(self) -> LabelSource {
        match self {
            BaseTask::AcsIncome => LabelSource {
                column: "PINCP".into(),
                rule: LabelRule::GreaterThan { threshold: 50_000.0 },
            },
            BaseTask::AcsEmployment => LabelSource {
                column: "ESR".into(),
                rule: LabelRule::Equals { target: 1.0 },
            },
        }
    }
}

fn state_codes() -> impl Iterator<Item = i64> {
    (1..=56).chain([72])
}

/// Income above $50,000 (`PINCP > 50000`), keyed by state (`ST`).
pub fn acs_income() -> Schema {
    Schema::new(
        vec![
            ColumnSchema::numeric("AGEP"),
            ColumnSchema::categorical("COW", 1..=9),
            ColumnSchema::categorical("SCHL", 1..=24),
            ColumnSchema::categorical("MAR", 1..=5),
            ColumnSchema::numeric("OCCP"),
            ColumnSchema::numeric("POBP"),
            ColumnSchema::categorical("RELP", 0..=17),
            ColumnSchema::numeric("WKHP"),
            ColumnSchema::categorical("SEX", [1, 2]),
            ColumnSchema::categorical("RAC1P", 1..=9),
            ColumnSchema::categorical("ST", state_codes()),
        ],
        "PINCP_GT_50000",
        vec!["SEX".into(), "RAC1P".into()],
    )
}

/// Employment status (`ESR == 1`), keyed by state (`ST`).
pub fn acs_employment() -> Schema {
    Schema::new(
        vec![
            ColumnSchema::numeric("AGEP"),
            ColumnSchema::categorical("SCHL", 0..=24),
            ColumnSchema::categorical("MAR", 1..=5),
            ColumnSchema::categorical("RELP", 0..=17),
            ColumnSchema::categorical("DIS", [1, 2]),
            ColumnSchema::categorical("ESP", 0..=8),
            ColumnSchema::categorical("CIT", 1..=5),
            ColumnSchema::categorical("MIG", 0..=3),
            ColumnSchema::categorical("MIL", 0..=4),
            ColumnSchema::categorical("ANC", [1, 2, 3, 4, 8]),
            ColumnSchema::categorical("NATIVITY", [1, 2]),
            ColumnSchema::categorical("DEAR", [1, 2]),
            ColumnSchema::categorical("DEYE", [1, 2]),
            ColumnSchema::categorical("DREM", 0..=2),
            ColumnSchema::categorical("SEX", [1, 2]),
            ColumnSchema::categorical("RAC1P", 1..=9),
            ColumnSchema::categorical("ST", state_codes()),
        ],
        "ESR_EMPLOYED",
        vec!["SEX".into(), "RAC1P".into()],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_well_formed() {
        for task in [BaseTask::AcsIncome, BaseTask::AcsEmployment] {
            assert!(task.schema().violations().is_empty(), "{task:?}");
        }
    }
}
