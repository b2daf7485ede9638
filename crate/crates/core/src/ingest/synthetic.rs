//! Seeded synthetic federations standing in for ACS extracts.
//!
//! Group membership is apportioned exactly (largest-remainder rounding of
//! `share * rows`, then shuffled), so configured shares are met to the row.
//! A row's positive probability is `base + sum_a (rate_a[v_a] - base)`,
//! clamped to [0, 1]; with a single attribute that is exactly the
//! configured group rate. Numeric features are shifted by the label (so a
//! linear model beats chance) and by group membership.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{DataSource, FederatedDataset, GenerationRecord};
use crate::partition::{split_train_val_test, SplitFractions};
use crate::rng::{self, derive_seed};
use crate::tabular::{ClientId, ColumnData, ColumnSchema, Dataset, Schema, SplitSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAttribute {
    pub name: String,
    pub values: Vec<i64>,
}

/// Shares and positive rates for one attribute, aligned with its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupProfile {
    pub shares: Vec<f64>,
    pub positive_rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub base_rate: f64,
    /// One entry per attribute, in attribute order.
    pub groups: Vec<GroupProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_clients: usize,
    /// Inclusive row-count range per client.
    pub rows_per_client: (usize, usize),
    pub feature_dim: usize,
    /// Mean shift of every numeric feature between label classes.
    pub signal: f64,
    pub attributes: Vec<SyntheticAttribute>,
    /// Either one profile shared by every client or one per client.
    pub profiles: Vec<ClientProfile>,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    /// `n_clients` clients of `rows` rows with one two-valued attribute
    /// (codes 1 and 2, equal shares) and the given per-group positive rates.
    pub fn two_group(attr: &str, n_clients: usize, rows: usize, rates: [f64; 2], seed: u64) -> Self {
        SyntheticSpec {
            n_clients,
            rows_per_client: (rows, rows),
            feature_dim: 3,
            signal: 1.0,
            attributes: vec![SyntheticAttribute {
                name: attr.into(),
                values: vec![1, 2],
            }],
            profiles: vec![ClientProfile {
                base_rate: 0.5 * (rates[0] + rates[1]),
                groups: vec![GroupProfile {
                    shares: vec![0.5, 0.5],
                    positive_rates: rates.to_vec(),
                }],
            }],
            split: SplitFractions::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Precondition(m));
        if self.n_clients == 0 {
            return bad("n_clients must be >= 1".into());
        }
        if self.rows_per_client.0 > self.rows_per_client.1 {
            return bad("rows_per_client min exceeds max".into());
        }
        if self.attributes.is_empty() {
            return bad("at least one sensitive attribute is required".into());
        }
        if self.profiles.len() != 1 && self.profiles.len() != self.n_clients {
            return bad(format!(
                "{} profiles for {} clients (expected 1 or one per client)",
                self.profiles.len(),
                self.n_clients
            ));
        }
        self.split.validate()?;
        for attr in &self.attributes {
            if attr.values.is_empty() {
                return bad(format!("attribute {} has no values", attr.name));
            }
        }
        for (p, profile) in self.profiles.iter().enumerate() {
            if !(0.0..=1.0).contains(&profile.base_rate) {
                return bad(format!("profile {p}: base rate outside [0, 1]"));
            }
            if profile.groups.len() != self.attributes.len() {
                return bad(format!("profile {p}: one group profile per attribute required"));
            }
            for (g, attr) in profile.groups.iter().zip(&self.attributes) {
                if g.shares.len() != attr.values.len() || g.positive_rates.len() != attr.values.len() {
                    return bad(format!("profile {p}, attribute {}: length mismatch", attr.name));
                }
                let sum: f64 = g.shares.iter().sum();
                if (sum - 1.0).abs() > 1e-9 || g.shares.iter().any(|s| *s < 0.0) {
                    return bad(format!("profile {p}, attribute {}: shares must sum to 1", attr.name));
                }
                if g.positive_rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
                    return bad(format!("profile {p}, attribute {}: rates outside [0, 1]", attr.name));
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Schema {
        let mut columns: Vec<ColumnSchema> = (0..self.feature_dim)
            .map(|j| ColumnSchema::numeric(format!("X{j}")))
            .collect();
        columns.extend(
            self.attributes
                .iter()
                .map(|a| ColumnSchema::categorical(a.name.clone(), a.values.iter().copied())),
        );
        Schema::new(columns, "Y", self.attributes.iter().map(|a| a.name.clone()).collect())
    }

    fn profile(&self, client: usize) -> &ClientProfile {
        if self.profiles.len() == 1 {
            &self.profiles[0]
        } else {
            &self.profiles[client]
        }
    }

    pub fn client_ids(&self) -> Vec<ClientId> {
        let width = (self.n_clients.saturating_sub(1)).to_string().len().max(2);
        (0..self.n_clients)
            .map(|k| ClientId::new(format!("client_{k:0width$}")))
            .collect()
    }
}

/// Largest-remainder apportionment of `n` rows over `shares`.
fn apportion(shares: &[f64], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = shares.iter().map(|s| s * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn generate_client(spec: &SyntheticSpec, schema: &Arc<Schema>, k: usize, first_row_id: u64) -> Result<Dataset> {
    let mut rng = rng::seeded(derive_seed(spec.seed, &format!("synthetic/client/{k}")));
    let (lo, hi) = spec.rows_per_client;
    let n = rng.random_range(lo as u64..=hi as u64) as usize;
    let profile = spec.profile(k);

    // Value index per attribute per row.
    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(spec.attributes.len());
    for g in &profile.groups {
        let counts = apportion(&g.shares, n);
        let mut idx: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(v, &c)| std::iter::repeat_n(v, c))
            .collect();
        rng::shuffle(&mut idx, &mut rng);
        groups.push(idx);
    }

    let mut labels = Vec::with_capacity(n);
    for row in 0..n {
        let mut p = profile.base_rate;
        for (g, idx) in profile.groups.iter().zip(&groups) {
            p += g.positive_rates[idx[row]] - profile.base_rate;
        }
        let p = p.clamp(0.0, 1.0);
        labels.push(u8::from(rng.random::<f64>() < p));
    }

    let n_attrs = spec.attributes.len();
    let mut columns = Vec::with_capacity(spec.feature_dim + n_attrs);
    for j in 0..spec.feature_dim {
        let a = j % n_attrs;
        let col: Vec<f64> = (0..n)
            .map(|row| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let y = f64::from(labels[row]) * 2.0 - 1.0;
                spec.signal * y + 0.25 * groups[a][row] as f64 + noise
            })
            .collect();
        columns.push(ColumnData::Numeric(col));
    }
    for (a, attr) in spec.attributes.iter().enumerate() {
        columns.push(ColumnData::Categorical(
            groups[a].iter().map(|&v| attr.values[v]).collect(),
        ));
    }
    let row_ids = (first_row_id..first_row_id + n as u64).collect();
    Dataset::new(schema.clone(), columns, labels, row_ids)
}

/// Per-client pools before any train/validation/test split. Row ids are
/// unique across the whole federation.
pub fn generate_synthetic_pools(spec: &SyntheticSpec) -> Result<BTreeMap<ClientId, Dataset>> {
    spec.validate()?;
    let schema = Arc::new(spec.schema());
    let mut out = BTreeMap::new();
    let mut next_id = 0u64;
    for (k, id) in spec.client_ids().into_iter().enumerate() {
        let d = generate_client(spec, &schema, k, next_id)?;
        next_id += d.len() as u64;
        out.insert(id, d);
    }
    Ok(out)
}

/// Full federation, each client split with `spec.split`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<FederatedDataset> {
    let pools = generate_synthetic_pools(spec)?;
    let mut record = GenerationRecord::new(
        "synthetic",
        DataSource::Synthetic(spec.clone()),
        spec.schema(),
        spec.seed,
    );
    record.split = spec.split;
    let mut clients = BTreeMap::new();
    for (k, (id, pool)) in pools.into_iter().enumerate() {
        let stage = format!("synthetic/split/{k}");
        let seed = derive_seed(spec.seed, &stage);
        record.seeds.insert(stage, seed);
        let split: SplitSet = split_train_val_test(&pool, spec.split, seed)?;
        clients.insert(id, split);
    }
    FederatedDataset::new(clients, record)
}
