use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use csv::{ReaderBuilder, Terminator, WriterBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{FederatedDataset, GenerationRecord};
use crate::tabular::{ClientId, ColumnData, ColumnKind, Dataset, Schema, SplitName, SplitSet};

/// Optional leading column carrying row identity through CSV round trips.
pub const ROW_ID_COLUMN: &str = "row_id";
pub const METADATA_FILE: &str = "metadata.json";
pub const CLIENTS_DIR: &str = "clients";

/// How the binary label is derived from a source column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LabelRule {
    /// Cell must already be 0 or 1.
    Binary,
    /// `1` iff value > threshold (ACSIncome: PINCP > 50000).
    GreaterThan { threshold: f64 },
    /// `1` iff value == target (ACSEmployment: ESR == 1).
    Equals { target: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSource {
    pub column: String,
    pub rule: LabelRule,
}

impl LabelSource {
    pub fn binary(column: impl Into<String>) -> Self {
        LabelSource {
            column: column.into(),
            rule: LabelRule::Binary,
        }
    }

    fn label_of(&self, value: f64) -> Option<u8> {
        match self.rule {
            LabelRule::Binary if value == 0.0 => Some(0),
            LabelRule::Binary if value == 1.0 => Some(1),
            LabelRule::Binary => None,
            LabelRule::GreaterThan { threshold } => Some(u8::from(value > threshold)),
            LabelRule::Equals { target } => Some(u8::from(value == target)),
        }
    }
}

fn parse_cell(raw: &str, kind: ColumnKind) -> std::result::Result<f64, String> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("na") {
        return Err("missing value".into());
    }
    let v: f64 = s.parse().map_err(|_| format!("cannot parse {s:?}"))?;
    if !v.is_finite() {
        return Err(format!("non-finite value {s:?}"));
    }
    if kind == ColumnKind::Categorical && v.fract() != 0.0 {
        return Err(format!("categorical code {s:?} is not an integer"));
    }
    Ok(v)
}

/// Loads a comma-separated file with a header row. Extra columns are
/// ignored; a missing schema column, an unparseable or missing cell is an
/// error naming the row and column. A `row_id` column, when present,
/// supplies row identity; otherwise rows are numbered from 0.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema, label: &LabelSource) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let mut positions = Vec::with_capacity(schema.columns.len());
    for col in &schema.columns {
        let pos = find(&col.name)
            .ok_or_else(|| Error::ingest(path.display().to_string(), format!("missing column {}", col.name)))?;
        positions.push(pos);
    }
    let label_pos = find(&label.column)
        .ok_or_else(|| Error::ingest(path.display().to_string(), format!("missing column {}", label.column)))?;
    let id_pos = find(ROW_ID_COLUMN);

    let mut columns: Vec<ColumnData> = Dataset::empty(Arc::new(schema.clone())).columns().to_vec();
    let mut labels = Vec::new();
    let mut row_ids = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let at = |col: &str| format!("{} row {r}, column {col}", path.display());
        for ((data, col), &pos) in columns.iter_mut().zip(&schema.columns).zip(&positions) {
            let v = parse_cell(record.get(pos).unwrap_or(""), col.kind).map_err(|m| Error::ingest(at(&col.name), m))?;
            match data {
                ColumnData::Numeric(v_out) => v_out.push(v),
                ColumnData::Categorical(v_out) => v_out.push(v as i64),
            }
        }
        let raw = parse_cell(record.get(label_pos).unwrap_or(""), ColumnKind::Numeric)
            .map_err(|m| Error::ingest(at(&label.column), m))?;
        let y = label
            .label_of(raw)
            .ok_or_else(|| Error::ingest(at(&label.column), format!("label {raw} is not 0 or 1")))?;
        labels.push(y);
        row_ids.push(match id_pos {
            Some(p) => record
                .get(p)
                .unwrap_or("")
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::ingest(at(ROW_ID_COLUMN), "row id is not an unsigned integer"))?,
            None => r as u64,
        });
    }
    Dataset::new(Arc::new(schema.clone()), columns, labels, row_ids)
}

/// Writes `row_id`, every schema column, then the label, with LF line
/// endings. Numbers use the shortest round-tripping decimal form.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_writer(file);
    let schema = dataset.schema();
    let mut header = vec![ROW_ID_COLUMN.to_string()];
    header.extend(schema.columns.iter().map(|c| c.name.clone()));
    header.push(schema.label.clone());
    writer.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for r in 0..dataset.len() {
        row.clear();
        row.push(dataset.row_ids()[r].to_string());
        for col in dataset.columns() {
            row.push(match col {
                ColumnData::Numeric(v) => v[r].to_string(),
                ColumnData::Categorical(v) => v[r].to_string(),
            });
        }
        row.push(dataset.labels()[r].to_string());
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_metadata(record: &GenerationRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(record)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Layout: `<dir>/metadata.json` and `<dir>/clients/<id>/{train,validation,test}.csv`.
pub fn write_federation(fed: &FederatedDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (id, split) in &fed.clients {
        let client_dir = dir.join(CLIENTS_DIR).join(id.as_str());
        fs::create_dir_all(&client_dir).map_err(|e| Error::io(&client_dir, e))?;
        for name in SplitName::ALL {
            write_csv(split.get(name), client_dir.join(format!("{}.csv", name.as_str())))?;
        }
    }
    write_metadata(&fed.record, dir.join(METADATA_FILE))
}

/// Inverse of [`write_federation`].
pub fn read_federation(dir: impl AsRef<Path>) -> Result<FederatedDataset> {
    let dir = dir.as_ref();
    let meta_path = dir.join(METADATA_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let record: GenerationRecord = serde_json::from_str(&text)?;
    let label = LabelSource::binary(record.schema.label.clone());
    let clients_dir = dir.join(CLIENTS_DIR);
    let mut clients = BTreeMap::new();
    if clients_dir.exists() {
        let mut entries: Vec<_> = fs::read_dir(&clients_dir)
            .map_err(|e| Error::io(&clients_dir, e))?
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io(&clients_dir, e))?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            if !entry.path().is_dir() {
                continue;
            }
            let id = ClientId::new(entry.file_name().to_string_lossy().to_string());
            let part = |name: SplitName| {
                load_csv(
                    entry.path().join(format!("{}.csv", name.as_str())),
                    &record.schema,
                    &label,
                )
            };
            let split = SplitSet::new(
                part(SplitName::Train)?,
                part(SplitName::Validation)?,
                part(SplitName::Test)?,
            )?;
            clients.insert(id, split);
        }
    }
    FederatedDataset::new(clients, record)
}
