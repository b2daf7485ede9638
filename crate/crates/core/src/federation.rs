//! Federations of client datasets and the record of how they were made.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bias::AppliedModification;
use crate::error::{Error, Result};
use crate::ingest::{RemapConfig, SyntheticSpec};
use crate::partition::{PartitionConfig, SplitFractions};
use crate::tabular::{ClientId, Dataset, Schema, SplitSet};

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Csv { path: String, key_column: Option<String> },
}

/// Threshold rule used when exacerbating clients toward a bias target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub threshold: f64,
    pub step: f64,
    pub max_fraction: f64,
    pub level: crate::fairness::Level,
    pub attrs: Vec<String>,
    pub models: Vec<String>,
}

/// Outcome of a per-client threshold search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub client: ClientId,
    pub biased_toward: Option<String>,
    pub drop_fraction: Option<f64>,
    pub met: bool,
}

/// Cross-device construction: sub-partitioning, subset sampling and the
/// split of clients into training and testing groups.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub parts_per_client: usize,
    pub kept: Vec<ClientId>,
    pub rejected: Vec<ClientId>,
    pub train_clients: Vec<ClientId>,
    pub test_clients: Vec<ClientId>,
    pub test_client_fraction: f64,
}

/// Every parameter and seed behind a generated federation. Field order is
/// the key order of `metadata.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub library_version: String,
    pub base_task: String,
    pub year: u16,
    pub horizon: String,
    pub states: Vec<String>,
    pub source: DataSource,
    pub schema: Schema,
    pub remap: Option<RemapConfig>,
    pub partition: PartitionConfig,
    pub split: SplitFractions,
    pub master_seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub modifications: Vec<AppliedModification>,
    pub threshold_rule: Option<ThresholdRule>,
    pub threshold_outcomes: Vec<SearchOutcome>,
    pub device: Option<DeviceRecord>,
    pub notes: Vec<String>,
}

impl GenerationRecord {
    /// Record with library defaults (2018, 1-Year, no states listed).
    pub fn new(base_task: impl Into<String>, source: DataSource, schema: Schema, master_seed: u64) -> Self {
        GenerationRecord {
            library_version: LIBRARY_VERSION.to_string(),
            base_task: base_task.into(),
            year: 2018,
            horizon: "1-Year".into(),
            states: Vec::new(),
            source,
            schema,
            remap: None,
            partition: PartitionConfig::default(),
            split: SplitFractions::default(),
            master_seed,
            seeds: BTreeMap::new(),
            modifications: Vec::new(),
            threshold_rule: None,
            threshold_outcomes: Vec::new(),
            device: None,
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedDataset {
    pub clients: BTreeMap<ClientId, SplitSet>,
    pub record: GenerationRecord,
}

impl FederatedDataset {
    /// All clients must share one schema, equal to the record's.
    pub fn new(clients: BTreeMap<ClientId, SplitSet>, record: GenerationRecord) -> Result<Self> {
        for (id, split) in &clients {
            if **split.schema() != record.schema {
                return Err(Error::Schema(format!(
                    "client {id} does not share the federation schema"
                )));
            }
        }
        Ok(FederatedDataset { clients, record })
    }

    pub fn schema(&self) -> Arc<Schema> {
        match self.clients.values().next() {
            Some(s) => s.schema().clone(),
            None => Arc::new(self.record.schema.clone()),
        }
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    pub fn client_ids(&self) -> Vec<ClientId> {
        self.clients.keys().cloned().collect()
    }

    pub fn get(&self, id: &ClientId) -> Result<&SplitSet> {
        self.clients
            .get(id)
            .ok_or_else(|| Error::Precondition(format!("unknown client {id}")))
    }

    /// Federation restricted to `ids`, with the same record.
    pub fn subset(&self, ids: &[ClientId]) -> Result<FederatedDataset> {
        let mut clients = BTreeMap::new();
        for id in ids {
            clients.insert(id.clone(), self.get(id)?.clone());
        }
        Ok(FederatedDataset {
            clients,
            record: self.record.clone(),
        })
    }

    /// Concatenation of one split over all clients, in client order.
    pub fn pooled(&self, split: crate::tabular::SplitName) -> Dataset {
        let parts: Vec<&Dataset> = self.clients.values().map(|s| s.get(split)).collect();
        if parts.is_empty() {
            return Dataset::empty(self.schema());
        }
        Dataset::concat(&parts).expect("clients share a schema")
    }
}
