//! Immutable columnar tables, schemas and sensitive-group selection.
//!
//! Categorical cells are integer codes (ACS style, e.g. `SEX ∈ {1, 2}`);
//! human-readable labels only appear in remap configs and reports. Labels are
//! strictly binary. Each row carries a `row_id` (its ordinal in the source
//! table) that survives partitioning, so disjointness of client splits can be
//! checked after the fact.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_values: Option<BTreeSet<i64>>,
}

impl ColumnSchema {
    pub fn numeric(name: impl Into<String>) -> Self {
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::Numeric,
            allowed_values: None,
        }
    }

    pub fn categorical(name: impl Into<String>, values: impl IntoIterator<Item = i64>) -> Self {
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::Categorical,
            allowed_values: Some(values.into_iter().collect()),
        }
    }

    /// Allowed codes in ascending order; empty for numeric columns.
    pub fn values(&self) -> Vec<i64> {
        self.allowed_values
            .as_ref()
            .map(|v| v.iter().copied().collect())
            .unwrap_or_default()
    }
}

/// Feature columns, the label column name and the sensitive attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSchema>,
    pub label: String,
    pub sensitive: Vec<String>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSchema>, label: impl Into<String>, sensitive: Vec<String>) -> Self {
        Schema {
            columns,
            label: label.into(),
            sensitive,
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSchema> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn is_sensitive(&self, name: &str) -> bool {
        self.sensitive.iter().any(|s| s == name)
    }

    /// Structural problems with the schema itself.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for col in &self.columns {
            if col.name.is_empty() {
                out.push(Violation::schema("", "column name is empty"));
            } else if !seen.insert(col.name.as_str()) {
                out.push(Violation::schema(&col.name, "duplicate column name"));
            }
            match col.kind {
                ColumnKind::Categorical => {
                    if col.allowed_values.as_ref().is_none_or(|v| v.is_empty()) {
                        out.push(Violation::schema(
                            &col.name,
                            "categorical column lists no allowed values",
                        ));
                    }
                }
                ColumnKind::Numeric => {
                    if col.allowed_values.is_some() {
                        out.push(Violation::schema(&col.name, "numeric column declares allowed values"));
                    }
                }
            }
        }
        if self.label.is_empty() {
            out.push(Violation::schema("", "label column name is empty"));
        } else if seen.contains(self.label.as_str()) {
            out.push(Violation::schema(&self.label, "label column also listed as a feature"));
        }
        for attr in &self.sensitive {
            match self.column(attr) {
                None => out.push(Violation::schema(attr, "sensitive attribute is not a column")),
                Some(c) if c.kind != ColumnKind::Categorical => {
                    out.push(Violation::schema(attr, "sensitive attribute is not categorical"))
                }
                _ => {}
            }
        }
        out
    }
}

/// One broken invariant. `row` is `None` for schema-level problems.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub row: Option<usize>,
    pub column: String,
    pub message: String,
}

impl Violation {
    fn schema(column: &str, message: &str) -> Self {
        Violation {
            row: None,
            column: column.to_string(),
            message: message.to_string(),
        }
    }

    fn cell(row: usize, column: &str, message: String) -> Self {
        Violation {
            row: Some(row),
            column: column.to_string(),
            message,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.row {
            Some(r) => write!(f, "row {r}, column {}: {}", self.column, self.message),
            None => write!(f, "column {}: {}", self.column, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical(Vec<i64>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Categorical(_) => ColumnKind::Categorical,
        }
    }

    /// Cell as a real number (categorical codes are widened).
    pub fn value_f64(&self, row: usize) -> f64 {
        match self {
            ColumnData::Numeric(v) => v[row],
            ColumnData::Categorical(v) => v[row] as f64,
        }
    }

    fn take(&self, indices: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(indices.iter().map(|&i| v[i]).collect()),
            ColumnData::Categorical(v) => ColumnData::Categorical(indices.iter().map(|&i| v[i]).collect()),
        }
    }

    fn extend_from(&mut self, other: &ColumnData) {
        match (self, other) {
            (ColumnData::Numeric(a), ColumnData::Numeric(b)) => a.extend_from_slice(b),
            (ColumnData::Categorical(a), ColumnData::Categorical(b)) => a.extend_from_slice(b),
            _ => unreachable!("schemas already compared equal"),
        }
    }
}

/// Columnar table with a binary label. Immutable: every transformation
/// returns a new `Dataset` sharing the schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<Schema>,
    columns: Vec<ColumnData>,
    labels: Vec<u8>,
    row_ids: Vec<u64>,
}

impl Dataset {
    /// Checks shape only (column count, kinds, lengths). Value-level
    /// invariants are reported by [`Dataset::validate`].
    pub fn new(schema: Arc<Schema>, columns: Vec<ColumnData>, labels: Vec<u8>, row_ids: Vec<u64>) -> Result<Self> {
        if columns.len() != schema.columns.len() {
            return Err(Error::Schema(format!(
                "{} columns supplied for a schema of {}",
                columns.len(),
                schema.columns.len()
            )));
        }
        if row_ids.len() != labels.len() {
            return Err(Error::Schema(format!(
                "{} row ids for {} labels",
                row_ids.len(),
                labels.len()
            )));
        }
        for (data, col) in columns.iter().zip(&schema.columns) {
            if data.kind() != col.kind {
                return Err(Error::Schema(format!("column {} has the wrong kind", col.name)));
            }
            if data.len() != labels.len() {
                return Err(Error::Schema(format!(
                    "column {} has {} cells, expected {}",
                    col.name,
                    data.len(),
                    labels.len()
                )));
            }
        }
        Ok(Dataset {
            schema,
            columns,
            labels,
            row_ids,
        })
    }

    pub fn empty(schema: Arc<Schema>) -> Self {
        let columns = schema
            .columns
            .iter()
            .map(|c| match c.kind {
                ColumnKind::Numeric => ColumnData::Numeric(Vec::new()),
                ColumnKind::Categorical => ColumnData::Categorical(Vec::new()),
            })
            .collect();
        Dataset {
            schema,
            columns,
            labels: Vec::new(),
            row_ids: Vec::new(),
        }
    }

    /// Builds a table from row-major cells. Categorical cells must be
    /// integral. Row ids are `0..rows.len()`.
    pub fn from_rows(schema: Arc<Schema>, rows: &[Vec<f64>], labels: Vec<u8>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Schema(format!(
                "{} rows for {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let mut columns: Vec<ColumnData> = Dataset::empty(schema.clone()).columns;
        for (r, row) in rows.iter().enumerate() {
            if row.len() != schema.columns.len() {
                return Err(Error::Schema(format!("row {r} has {} cells", row.len())));
            }
            for (c, &cell) in row.iter().enumerate() {
                match &mut columns[c] {
                    ColumnData::Numeric(v) => v.push(cell),
                    ColumnData::Categorical(v) => {
                        if cell.fract() != 0.0 || !cell.is_finite() {
                            return Err(Error::Schema(format!(
                                "row {r}, column {}: categorical cell {cell} is not an integer",
                                schema.columns[c].name
                            )));
                        }
                        v.push(cell as i64)
                    }
                }
            }
        }
        let row_ids = (0..labels.len() as u64).collect();
        Dataset::new(schema, columns, labels, row_ids)
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn columns(&self) -> &[ColumnData] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&ColumnData> {
        self.schema.index_of(name).map(|i| &self.columns[i])
    }

    pub fn categorical(&self, name: &str) -> Result<&[i64]> {
        match self.column(name) {
            Some(ColumnData::Categorical(v)) => Ok(v),
            Some(_) => Err(Error::Precondition(format!("column {name} is not categorical"))),
            None => Err(Error::Precondition(format!("unknown column {name}"))),
        }
    }

    /// Codes of a sensitive attribute, with its allowed values.
    pub fn sensitive_codes(&self, attr: &str) -> Result<(&[i64], Vec<i64>)> {
        if !self.schema.is_sensitive(attr) {
            return Err(Error::Precondition(format!("{attr} is not a sensitive attribute")));
        }
        let values = self.schema.column(attr).map(|c| c.values()).unwrap_or_default();
        Ok((self.categorical(attr)?, values))
    }

    /// Rows at `indices`, in that order.
    pub fn take(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.take(indices)).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }

    /// Rows for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> Dataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        self.take(&idx)
    }

    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Dataset> {
        if labels.len() != self.len() {
            return Err(Error::Precondition(format!(
                "{} labels for {} rows",
                labels.len(),
                self.len()
            )));
        }
        Ok(Dataset { labels, ..self.clone() })
    }

    /// Same cells under a different schema (used by remapping). Shape is
    /// re-checked.
    pub fn with_schema_and_columns(&self, schema: Arc<Schema>, columns: Vec<ColumnData>) -> Result<Dataset> {
        Dataset::new(schema, columns, self.labels.clone(), self.row_ids.clone())
    }

    pub fn with_row_ids(&self, row_ids: Vec<u64>) -> Result<Dataset> {
        if row_ids.len() != self.len() {
            return Err(Error::Precondition("row id count mismatch".into()));
        }
        Ok(Dataset {
            row_ids,
            ..self.clone()
        })
    }

    /// Concatenates tables that share one schema, in order.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Precondition("nothing to concatenate".into()))?;
        let mut out = (*first).clone();
        for part in &parts[1..] {
            if part.schema != out.schema {
                return Err(Error::Schema("cannot concatenate tables with different schemas".into()));
            }
            for (dst, src) in out.columns.iter_mut().zip(&part.columns) {
                dst.extend_from(src);
            }
            out.labels.extend_from_slice(&part.labels);
            out.row_ids.extend_from_slice(&part.row_ids);
        }
        Ok(out)
    }

    /// Positive-label rate, `None` when empty.
    pub fn positive_rate(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        let pos = self.labels.iter().filter(|&&y| y == 1).count();
        Some(pos as f64 / self.len() as f64)
    }

    /// Every schema and cell invariant. Empty iff the table is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = self.schema.violations();
        for (data, col) in self.columns.iter().zip(&self.schema.columns) {
            match data {
                ColumnData::Numeric(v) => {
                    for (r, x) in v.iter().enumerate() {
                        if !x.is_finite() {
                            out.push(Violation::cell(r, &col.name, format!("non-finite value {x}")));
                        }
                    }
                }
                ColumnData::Categorical(v) => {
                    if let Some(allowed) = &col.allowed_values {
                        for (r, code) in v.iter().enumerate() {
                            if !allowed.contains(code) {
                                out.push(Violation::cell(r, &col.name, format!("code {code} not allowed")));
                            }
                        }
                    }
                }
            }
        }
        for (r, &y) in self.labels.iter().enumerate() {
            if y > 1 {
                out.push(Violation::cell(
                    r,
                    &self.schema.label,
                    format!("label {y} is not binary"),
                ));
            }
        }
        let mut seen = HashSet::with_capacity(self.row_ids.len());
        for (r, id) in self.row_ids.iter().enumerate() {
            if !seen.insert(*id) {
                out.push(Violation::cell(r, "<row_id>", format!("duplicate row id {id}")));
            }
        }
        out
    }

    /// Indices of rows whose sensitive attribute `attr` equals `value`.
    pub fn group_index(&self, attr: &str, value: i64) -> Result<Vec<usize>> {
        let (codes, allowed) = self.sensitive_codes(attr)?;
        if !allowed.contains(&value) {
            return Err(Error::Precondition(format!(
                "{value} is not an allowed value of {attr}"
            )));
        }
        Ok(codes
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == value)
            .map(|(i, _)| i)
            .collect())
    }

    /// Composite column over the Cartesian product of the attributes'
    /// allowed values. Codes start at 1 and follow lexicographic order over
    /// `attrs` (first attribute most significant), then ascending value.
    pub fn intersect_groups(&self, attrs: &[&str]) -> Result<CompositeColumn> {
        if attrs.len() < 2 {
            return Err(Error::Precondition("intersection needs at least two attributes".into()));
        }
        let mut columns = Vec::with_capacity(attrs.len());
        let mut value_sets = Vec::with_capacity(attrs.len());
        for attr in attrs {
            let (codes, values) = self.sensitive_codes(attr)?;
            columns.push(codes);
            value_sets.push(values);
        }
        let mut combos: Vec<Vec<i64>> = vec![Vec::new()];
        for values in &value_sets {
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut c = prefix.clone();
                        c.push(*v);
                        c
                    })
                })
                .collect();
        }
        let lookup: BTreeMap<&[i64], i64> = combos
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_slice(), i as i64 + 1))
            .collect();
        let mut key = vec![0i64; attrs.len()];
        let mut codes = Vec::with_capacity(self.len());
        for row in 0..self.len() {
            for (k, col) in columns.iter().enumerate() {
                key[k] = col[row];
            }
            // Cells outside the allowed set get code 0; validate() flags
            // those rows on the source columns already.
            codes.push(lookup.get(key.as_slice()).copied().unwrap_or(0));
        }
        Ok(CompositeColumn {
            name: attrs.join("*"),
            attrs: attrs.iter().map(|s| s.to_string()).collect(),
            combos,
            codes,
        })
    }

    /// Appends a composite column as an extra sensitive attribute.
    pub fn with_composite(&self, composite: &CompositeColumn) -> Result<Dataset> {
        if composite.codes.len() != self.len() {
            return Err(Error::Precondition("composite column length mismatch".into()));
        }
        if self.schema.index_of(&composite.name).is_some() {
            return Err(Error::Precondition(format!("column {} already exists", composite.name)));
        }
        let mut schema = (*self.schema).clone();
        schema.columns.push(ColumnSchema::categorical(
            composite.name.clone(),
            1..=composite.combos.len() as i64,
        ));
        schema.sensitive.push(composite.name.clone());
        let mut columns = self.columns.clone();
        columns.push(ColumnData::Categorical(composite.codes.clone()));
        Dataset::new(Arc::new(schema), columns, self.labels.clone(), self.row_ids.clone())
    }
}

/// Intersectional attribute built by [`Dataset::intersect_groups`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeColumn {
    pub name: String,
    pub attrs: Vec<String>,
    /// `combos[code - 1]` is the value tuple behind `code`.
    pub combos: Vec<Vec<i64>>,
    pub codes: Vec<i64>,
}

impl CompositeColumn {
    pub fn combo(&self, code: i64) -> Option<&[i64]> {
        usize::try_from(code - 1)
            .ok()
            .and_then(|i| self.combos.get(i))
            .map(|c| c.as_slice())
    }
}

/// Client identifier. Ordering is plain string ordering; numeric keys are
/// zero-padded when generated so that this matches numeric order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub String);

impl ClientId {
    pub fn new(id: impl Into<String>) -> Self {
        ClientId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClientId {
    fn from(s: &str) -> Self {
        ClientId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Validation, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }
}

/// Train / validation / test parts of one client's data.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSet {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

impl SplitSet {
    pub fn new(train: Dataset, validation: Dataset, test: Dataset) -> Result<Self> {
        if train.schema() != validation.schema() || train.schema() != test.schema() {
            return Err(Error::Schema("split parts do not share one schema".into()));
        }
        Ok(SplitSet {
            train,
            validation,
            test,
        })
    }

    /// All rows in train.
    pub fn train_only(train: Dataset) -> Self {
        let empty = Dataset::empty(train.schema().clone());
        SplitSet {
            validation: empty.clone(),
            test: empty,
            train,
        }
    }

    pub fn get(&self, split: SplitName) -> &Dataset {
        match split {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    pub fn get_mut(&mut self, split: SplitName) -> &mut Dataset {
        match split {
            SplitName::Train => &mut self.train,
            SplitName::Validation => &mut self.validation,
            SplitName::Test => &mut self.test,
        }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        self.train.schema()
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Train, validation and test concatenated in that order.
    pub fn union(&self) -> Dataset {
        Dataset::concat(&[&self.train, &self.validation, &self.test]).expect("split parts share a schema")
    }

    /// Row ids present in more than one part.
    pub fn overlapping_row_ids(&self) -> Vec<u64> {
        let mut seen = HashSet::new();
        let mut dup = BTreeSet::new();
        for part in [&self.train, &self.validation, &self.test] {
            for id in part.row_ids() {
                if !seen.insert(*id) {
                    dup.insert(*id);
                }
            }
        }
        dup.into_iter().collect()
    }
}
