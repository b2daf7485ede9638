use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{ColumnData, ColumnKind, Dataset};

/// Code mapping for one categorical column. Codes without an entry go to
/// `default` when it is set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnRemap {
    pub map: BTreeMap<i64, i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<i64>,
}

impl ColumnRemap {
    fn target(&self, code: i64) -> Option<i64> {
        self.map.get(&code).copied().or(self.default)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemapConfig {
    pub columns: BTreeMap<String, ColumnRemap>,
    /// Optional label mapping over {0, 1}.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<BTreeMap<u8, u8>>,
}

impl RemapConfig {
    /// ACS RAC1P binarized: White (1) stays 1, every other code becomes 2.
    pub fn race_binary() -> Self {
        let mut columns = BTreeMap::new();
        columns.insert(
            "RAC1P".to_string(),
            ColumnRemap {
                map: BTreeMap::from([(1, 1)]),
                default: Some(2),
            },
        );
        RemapConfig { columns, label: None }
    }

    /// ACS RAC1P in five classes: White=1, Black=2, Asian=3,
    /// Alaska Native/American Indian=4 (source codes 3, 4, 5), Others=5.
    pub fn race_five_class() -> Self {
        let mut columns = BTreeMap::new();
        columns.insert(
            "RAC1P".to_string(),
            ColumnRemap {
                map: BTreeMap::from([(1, 1), (2, 2), (6, 3), (3, 4), (4, 4), (5, 4)]),
                default: Some(5),
            },
        );
        RemapConfig { columns, label: None }
    }
}

/// Applies the remap to a new dataset. Allowed values of a remapped column
/// become the image of its old allowed values; columns not listed are left
/// untouched and the row count never changes.
pub fn apply_remap(dataset: &Dataset, remap: &RemapConfig) -> Result<Dataset> {
    let mut schema = (**dataset.schema()).clone();
    let mut columns = dataset.columns().to_vec();
    for (name, spec) in &remap.columns {
        let idx = schema
            .index_of(name)
            .ok_or_else(|| Error::Precondition(format!("remap names unknown column {name}")))?;
        if schema.columns[idx].kind != ColumnKind::Categorical {
            return Err(Error::Precondition(format!("remap column {name} is not categorical")));
        }
        let ColumnData::Categorical(codes) = &columns[idx] else {
            unreachable!("kind checked against schema")
        };
        let mut mapped = Vec::with_capacity(codes.len());
        for (row, &code) in codes.iter().enumerate() {
            let target = spec.target(code).ok_or_else(|| {
                Error::ingest(
                    format!("row {row}, column {name}"),
                    format!("code {code} has no mapping and no default"),
                )
            })?;
            mapped.push(target);
        }
        let mut allowed: BTreeSet<i64> = schema.columns[idx]
            .values()
            .into_iter()
            .filter_map(|v| spec.target(v))
            .collect();
        allowed.extend(mapped.iter().copied());
        schema.columns[idx].allowed_values = Some(allowed);
        columns[idx] = ColumnData::Categorical(mapped);
    }
    let out = dataset.with_schema_and_columns(Arc::new(schema), columns)?;
    match &remap.label {
        None => Ok(out),
        Some(map) => {
            let mut labels = Vec::with_capacity(out.len());
            for (row, &y) in out.labels().iter().enumerate() {
                let t = map.get(&y).copied().unwrap_or(y);
                if t > 1 {
                    return Err(Error::ingest(
                        format!("row {row}, label"),
                        format!("label remaps to {t}"),
                    ));
                }
                labels.push(t);
            }
            out.with_labels(labels)
        }
    }
}
