//! Client splits: natural key split, IID / Dirichlet / linear
//! sub-partitioners, train/validation/test cuts and cross-device role
//! assignment. Every function is a pure function of its inputs and seed;
//! rounding residues go to a fixed target (last partition, train split).

use std::collections::BTreeMap;

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, derive_seed, StdRng};
use crate::tabular::{ClientId, ColumnKind, Dataset, SplitSet};

/// Retry budget for Dirichlet draws that violate the minimum partition size.
pub const DIRICHLET_MAX_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum SubPartitioner {
    Iid {
        n: usize,
    },
    Dirichlet {
        n: usize,
        alpha: f64,
        min_partition_size: usize,
    },
    Linear {
        n: usize,
    },
}

impl SubPartitioner {
    pub fn parts(&self) -> usize {
        match *self {
            SubPartitioner::Iid { n } | SubPartitioner::Linear { n } => n,
            SubPartitioner::Dirichlet { n, .. } => n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SubPartitioner::Iid { n } | SubPartitioner::Linear { n } if n == 0 => {
                Err(Error::Precondition("partition count must be >= 1".into()))
            }
            SubPartitioner::Dirichlet {
                n,
                alpha,
                min_partition_size,
            } => {
                if n < 2 {
                    Err(Error::Precondition("dirichlet partitioning needs n >= 2".into()))
                } else if !(alpha > 0.0) || !alpha.is_finite() {
                    Err(Error::Precondition(format!("dirichlet alpha must be > 0, got {alpha}")))
                } else if min_partition_size == 0 {
                    Err(Error::Precondition("min_partition_size must be >= 1".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, dataset: &Dataset, seed: u64) -> Result<Vec<Dataset>> {
        match *self {
            SubPartitioner::Iid { n } => partition_iid(dataset, n, seed),
            SubPartitioner::Dirichlet {
                n,
                alpha,
                min_partition_size,
            } => partition_dirichlet(dataset, n, alpha, min_partition_size, seed),
            SubPartitioner::Linear { n } => partition_linear(dataset, n, seed),
        }
    }
}

/// How source data becomes clients: an optional natural key split followed
/// by an optional sub-partitioner applied to each key group.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionConfig {
    pub natural_key: Option<String>,
    pub sub_partitioner: Option<SubPartitioner>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let f = SplitFractions {
            train,
            validation,
            test,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("train", self.train),
            ("validation", self.validation),
            ("test", self.test),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Precondition(format!("{name} fraction {v} outside [0, 1]")));
            }
        }
        let sum = self.train + self.validation + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

const US_STATES: [(i64, &str); 52] = [
    (1, "AL"),
    (2, "AK"),
    (4, "AZ"),
    (5, "AR"),
    (6, "CA"),
    (8, "CO"),
    (9, "CT"),
    (10, "DE"),
    (11, "DC"),
    (12, "FL"),
    (13, "GA"),
    (15, "HI"),
    (16, "ID"),
    (17, "IL"),
    (18, "IN"),
    (19, "IA"),
    (20, "KS"),
    (21, "KY"),
    (22, "LA"),
    (23, "ME"),
    (24, "MD"),
    (25, "MA"),
    (26, "MI"),
    (27, "MN"),
    (28, "MS"),
    (29, "MO"),
    (30, "MT"),
    (31, "NE"),
    (32, "NV"),
    (33, "NH"),
    (34, "NJ"),
    (35, "NM"),
    (36, "NY"),
    (37, "NC"),
    (38, "ND"),
    (39, "OH"),
    (40, "OK"),
    (41, "OR"),
    (42, "PA"),
    (44, "RI"),
    (45, "SC"),
    (46, "SD"),
    (47, "TN"),
    (48, "TX"),
    (49, "UT"),
    (50, "VT"),
    (51, "VA"),
    (53, "WA"),
    (54, "WV"),
    (55, "WI"),
    (56, "WY"),
    (72, "PR"),
];

/// Postal abbreviation for an ACS `ST` (FIPS) code.
pub fn state_abbreviation(fips: i64) -> Option<&'static str> {
    US_STATES.iter().find(|(c, _)| *c == fips).map(|(_, s)| *s)
}

fn key_client_id(column: &str, code: i64, width: usize) -> ClientId {
    if column == "ST" {
        if let Some(abbr) = state_abbreviation(code) {
            return ClientId::new(abbr);
        }
    }
    ClientId::new(format!("{code:0width$}"))
}

/// One client per observed code of `key_column`. Clients named by US state
/// abbreviation when the key is `ST`, otherwise by zero-padded code.
pub fn split_by_key(pooled: &Dataset, key_column: &str) -> Result<BTreeMap<ClientId, Dataset>> {
    let col = pooled
        .schema()
        .column(key_column)
        .ok_or_else(|| Error::Precondition(format!("key column {key_column} not in schema")))?;
    if col.kind != ColumnKind::Categorical {
        return Err(Error::Precondition(format!(
            "key column {key_column} is not categorical"
        )));
    }
    let codes = pooled.categorical(key_column)?;
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &c) in codes.iter().enumerate() {
        groups.entry(c).or_default().push(i);
    }
    let width = groups.keys().map(|c| c.to_string().len()).max().unwrap_or(1);
    Ok(groups
        .into_iter()
        .map(|(code, idx)| (key_client_id(key_column, code, width), pooled.take(&idx)))
        .collect())
}

/// Seeded permutation cut into `n` near-equal chunks; the first `N mod n`
/// chunks hold one extra row.
pub fn partition_iid(dataset: &Dataset, n: usize, seed: u64) -> Result<Vec<Dataset>> {
    if n == 0 || n > dataset.len() {
        return Err(Error::Precondition(format!(
            "cannot split {} rows into {n} IID partitions",
            dataset.len()
        )));
    }
    let perm = rng::permutation(dataset.len(), seed);
    let base = dataset.len() / n;
    let extra = dataset.len() % n;
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for i in 0..n {
        let size = base + usize::from(i < extra);
        out.push(dataset.take(&perm[start..start + size]));
        start += size;
    }
    Ok(out)
}

fn dirichlet_draw(alpha: f64, n: usize, rng: &mut StdRng) -> Option<Vec<f64>> {
    let gamma = Gamma::new(alpha, 1.0).ok()?;
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    Some(draws.into_iter().map(|d| d / total).collect())
}

/// Label-skewed partitioning: rows of each label class are shared out with
/// proportions drawn from `Dir(alpha)`. Draws are repeated until every
/// partition holds at least `min_size` rows.
pub fn partition_dirichlet(
    dataset: &Dataset,
    n: usize,
    alpha: f64,
    min_size: usize,
    seed: u64,
) -> Result<Vec<Dataset>> {
    SubPartitioner::Dirichlet {
        n,
        alpha,
        min_partition_size: min_size,
    }
    .validate()?;
    if n * min_size > dataset.len() {
        return Err(Error::Infeasible(format!(
            "min_partition_size {min_size} x {n} partitions exceeds {} rows",
            dataset.len()
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &y) in dataset.labels().iter().enumerate() {
        by_class[usize::from(y == 1)].push(i);
    }
    for _ in 0..DIRICHLET_MAX_RETRIES {
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut ok = true;
        for class_rows in &by_class {
            let mut rows = class_rows.clone();
            rng::shuffle(&mut rows, &mut rng);
            let Some(props) = dirichlet_draw(alpha, n, &mut rng) else {
                ok = false;
                break;
            };
            let mut start = 0usize;
            let mut cum = 0.0;
            for (k, p) in props.iter().enumerate() {
                cum += p;
                let end = if k + 1 == n {
                    rows.len()
                } else {
                    ((cum * rows.len() as f64).floor() as usize).clamp(start, rows.len())
                };
                buckets[k].extend_from_slice(&rows[start..end]);
                start = end;
            }
        }
        if ok && buckets.iter().all(|b| b.len() >= min_size) {
            return Ok(buckets
                .into_iter()
                .map(|mut b| {
                    rng::shuffle(&mut b, &mut rng);
                    dataset.take(&b)
                })
                .collect());
        }
    }
    Err(Error::Infeasible(format!(
        "no Dirichlet(alpha={alpha}) draw gave every one of {n} partitions >= {min_size} rows after {DIRICHLET_MAX_RETRIES} retries"
    )))
}

/// Partition `i` (1-based) receives `floor(i * N / (n(n+1)/2))` rows of a
/// seeded shuffle; the residue goes to the last partition.
pub fn partition_linear(dataset: &Dataset, n: usize, seed: u64) -> Result<Vec<Dataset>> {
    let total_weight = n * (n + 1) / 2;
    if n == 0 || total_weight > dataset.len() {
        return Err(Error::Precondition(format!(
            "linear partitioning into {n} parts needs at least {total_weight} rows, got {}",
            dataset.len()
        )));
    }
    let perm = rng::permutation(dataset.len(), seed);
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for i in 1..=n {
        let size = if i == n {
            dataset.len() - start
        } else {
            i * dataset.len() / total_weight
        };
        out.push(dataset.take(&perm[start..start + size]));
        start += size;
    }
    Ok(out)
}

/// Seeded shuffle then contiguous cut. Validation and test sizes are
/// `round(fraction * N)`; train takes the residue.
pub fn split_train_val_test(dataset: &Dataset, fractions: SplitFractions, seed: u64) -> Result<SplitSet> {
    fractions.validate()?;
    let n = dataset.len();
    let n_val = rng::rounded_share(fractions.validation, n).min(n);
    let n_test = rng::rounded_share(fractions.test, n).min(n - n_val);
    let n_train = n - n_val - n_test;
    let perm = rng::permutation(n, seed);
    SplitSet::new(
        dataset.take(&perm[..n_train]),
        dataset.take(&perm[n_train..n_train + n_val]),
        dataset.take(&perm[n_train + n_val..]),
    )
}

/// Client id of part `i` of `n` sub-partitions of `parent`, zero-padded so
/// ids sort in part order.
pub fn sub_client_id(parent: &ClientId, i: usize, n: usize) -> ClientId {
    let width = n.saturating_sub(1).to_string().len();
    ClientId::new(format!("{parent}_{i:0width$}"))
}

/// Key split, optional sub-partitioning of each key group, then a
/// train/validation/test split per client. Without a key the whole table
/// is one client named `client`. Seeds derive from `config.seed` per stage
/// and client.
pub fn build_clients(
    pooled: &Dataset,
    config: &PartitionConfig,
    fractions: SplitFractions,
) -> Result<BTreeMap<ClientId, SplitSet>> {
    let seed = config.seed;
    fractions.validate()?;
    if let Some(sub) = &config.sub_partitioner {
        sub.validate()?;
    }
    let groups = match &config.natural_key {
        Some(key) => split_by_key(pooled, key)?,
        None => BTreeMap::from([(ClientId::new("client"), pooled.clone())]),
    };
    let mut out = BTreeMap::new();
    for (id, data) in groups {
        let parts: Vec<(ClientId, Dataset)> = match &config.sub_partitioner {
            Some(sub) => {
                let n = sub.parts();
                sub.apply(&data, derive_seed(seed, &format!("partition/{id}")))?
                    .into_iter()
                    .enumerate()
                    .map(|(i, d)| (sub_client_id(&id, i, n), d))
                    .collect()
            }
            None => vec![(id, data)],
        };
        for (cid, d) in parts {
            let split = split_train_val_test(&d, fractions, derive_seed(seed, &format!("split/{cid}")))?;
            out.insert(cid, split);
        }
    }
    Ok(out)
}

/// Splits client ids into (train clients, test clients) for cross-device
/// evaluation. `|test| = round(fraction * K)`, clamped so both sides are
/// non-empty. Both lists come back sorted.
pub fn assign_device_roles(
    clients: &[ClientId],
    test_client_fraction: f64,
    seed: u64,
) -> Result<(Vec<ClientId>, Vec<ClientId>)> {
    if clients.len() < 2 {
        return Err(Error::Precondition(format!(
            "device roles need at least 2 clients, got {}",
            clients.len()
        )));
    }
    if !(test_client_fraction > 0.0 && test_client_fraction < 1.0) {
        return Err(Error::Precondition(format!(
            "test client fraction must be in (0, 1), got {test_client_fraction}"
        )));
    }
    let k = clients.len();
    let n_test = rng::rounded_share(test_client_fraction, k).clamp(1, k - 1);
    let mut sorted = clients.to_vec();
    sorted.sort();
    let perm = rng::permutation(k, seed);
    let mut test: Vec<ClientId> = perm[..n_test].iter().map(|&i| sorted[i].clone()).collect();
    let mut train: Vec<ClientId> = perm[n_test..].iter().map(|&i| sorted[i].clone()).collect();
    test.sort();
    train.sort();
    Ok((train, test))
}
