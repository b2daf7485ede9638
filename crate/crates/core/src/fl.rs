//! Federated training simulation: FedAvg, FedAvg with a fairness
//! regularizer on the local objective, and a pooled baseline.
//!
//! One feature encoding is fit on the pooled training rows of every client
//! and shared by all of them. The initial parameters come from
//! `init_seed(seed)`, client `k` (its position in client-id order) shuffles
//! with `local_seed(seed, r, k)` in round `r`, and round `r` samples its
//! participants with `derive_seed(seed, "sample/{r}")`. A one-client,
//! one-round federation therefore replays `train_logistic` exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::{demographic_disparity, fairness_table, FairnessReport, Level, Metric, Predictions};
use crate::federation::FederatedDataset;
use crate::models::{
    accuracy, ce_gradient, ce_loss, init_params, init_seed, local_seed, logit, predict, sigmoid, train_logistic,
    EncodedData, EncodingOptions, FeatureEncoding, LinearModel, Model, Optimizer, TrainConfig,
};
use crate::rng::{self, derive_seed};
use crate::tabular::{ClientId, Dataset, SplitName, SplitSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FLConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub client_fraction: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    #[serde(default)]
    pub l2_penalty: f64,
    pub seed: u64,
    #[serde(default)]
    pub encoding: EncodingOptions,
}

impl Default for FLConfig {
    fn default() -> Self {
        FLConfig {
            rounds: 50,
            local_epochs: 1,
            client_fraction: 1.0,
            batch_size: 64,
            learning_rate: 0.1,
            optimizer: Optimizer::Sgd,
            l2_penalty: 1e-4,
            seed: 0,
            encoding: EncodingOptions::default(),
        }
    }
}

impl FLConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 || self.local_epochs == 0 {
            return Err(Error::Precondition("rounds and local_epochs must be at least 1".into()));
        }
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return Err(Error::Precondition(format!(
                "client_fraction {} outside (0, 1]",
                self.client_fraction
            )));
        }
        self.local_config().validate()
    }

    /// The per-client training configuration (E local epochs).
    pub fn local_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.local_epochs,
            l2_penalty: self.l2_penalty,
            optimizer: self.optimizer,
            seed: self.seed,
            encoding: self.encoding.clone(),
        }
    }

    /// Participants per round: `max(1, round(fraction * k))`.
    pub fn participants(&self, k: usize) -> usize {
        rng::rounded_share(self.client_fraction, k).max(1).min(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairRegConfig {
    pub lambda: f64,
    /// Reported against (whether the final global DD is within it); the
    /// weight itself stays fixed for the run.
    pub target_dd: f64,
    pub target_attr: String,
}

impl FairRegConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Precondition(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.target_dd >= 0.0) {
            return Err(Error::Precondition("target_dd must be >= 0".into()));
        }
        Ok(())
    }
}

/// Size-weighted mean `sum_k (n_k / n) theta_k`.
pub fn aggregate_weighted(params: &[Vec<f64>], sizes: &[usize]) -> Result<Vec<f64>> {
    if params.is_empty() || params.len() != sizes.len() {
        return Err(Error::Precondition(format!(
            "{} parameter vectors for {} sizes",
            params.len(),
            sizes.len()
        )));
    }
    let dim = params[0].len();
    if params.iter().any(|p| p.len() != dim) {
        return Err(Error::Precondition("parameter vectors differ in shape".into()));
    }
    if sizes.contains(&0) {
        return Err(Error::Precondition("client sizes must be positive".into()));
    }
    let n: usize = sizes.iter().sum();
    let mut out: Vec<f64> = params[0].iter().map(|v| sizes[0] as f64 / n as f64 * v).collect();
    for (p, &nk) in params.iter().zip(sizes).skip(1) {
        let w = nk as f64 / n as f64;
        for (o, v) in out.iter_mut().zip(p) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Soft one-vs-rest gaps: mean predicted probability inside each value
/// minus the mean outside it. Returns `(value, gap)` for the value with the
/// largest |gap| (lowest code on ties), or `None` when the rows do not
/// cover two groups.
fn soft_gap(params: &[f64], data: &EncodedData, codes: &[i64], values: &[i64], rows: &[usize]) -> Option<(i64, f64)> {
    let mut sum = vec![0.0; values.len()];
    let mut count = vec![0usize; values.len()];
    let mut total = 0.0;
    for &r in rows {
        let p = sigmoid(logit(params, data.x.row(r)));
        let slot = values.binary_search(&codes[r]).expect("code in allowed set");
        sum[slot] += p;
        count[slot] += 1;
        total += p;
    }
    let n = rows.len();
    let mut best: Option<(i64, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if count[i] == 0 || count[i] == n {
            continue;
        }
        let gap = sum[i] / count[i] as f64 - (total - sum[i]) / (n - count[i]) as f64;
        if best.is_none_or(|(_, g)| gap.abs() > g.abs()) {
            best = Some((v, gap));
        }
    }
    best
}

/// Local objective `(1 - lambda) CE + lambda |soft gap|`, CE alone on rows
/// that miss a second group.
pub fn fair_objective(
    params: &[f64],
    data: &EncodedData,
    codes: &[i64],
    values: &[i64],
    rows: &[usize],
    l2: f64,
    lambda: f64,
) -> f64 {
    let ce = ce_loss(params, data, rows, l2);
    match soft_gap(params, data, codes, values, rows) {
        Some((_, gap)) if lambda > 0.0 => (1.0 - lambda) * ce + lambda * gap.abs(),
        _ => ce,
    }
}

/// Gradient of [`fair_objective`] (the fairness term at the current
/// argmax value), written into `grad`.
#[allow(clippy::too_many_arguments)]
pub fn fair_gradient(
    params: &[f64],
    data: &EncodedData,
    codes: &[i64],
    values: &[i64],
    rows: &[usize],
    l2: f64,
    lambda: f64,
    grad: &mut [f64],
) {
    ce_gradient(params, data, rows, l2, grad);
    if lambda == 0.0 {
        return;
    }
    let Some((z, gap)) = soft_gap(params, data, codes, values, rows) else {
        return;
    };
    let n_in = rows.iter().filter(|&&r| codes[r] == z).count() as f64;
    let n_out = rows.len() as f64 - n_in;
    let sign = gap.signum();
    let d = data.x.cols;
    for g in grad.iter_mut() {
        *g *= 1.0 - lambda;
    }
    for &r in rows {
        let x = data.x.row(r);
        let p = sigmoid(logit(params, x));
        let coef = if codes[r] == z { 1.0 / n_in } else { -1.0 / n_out };
        let s = lambda * sign * coef * p * (1.0 - p);
        for (g, xi) in grad[..d].iter_mut().zip(x) {
            *g += s * xi;
        }
        grad[d] += s;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub participants: Vec<ClientId>,
    pub sizes: Vec<usize>,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    /// Global DD per attribute on the pooled training rows.
    pub dd: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundHistory {
    pub config: FLConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fair: Option<FairRegConfig>,
    pub attrs: Vec<String>,
    pub rounds: Vec<RoundRecord>,
    /// Whether the final DD on the fair target attribute is within target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_met: Option<bool>,
}

impl RoundHistory {
    /// One row per round. Participants and sizes are `;`-joined.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,participants,sizes,train_accuracy,validation_accuracy");
        for a in &self.attrs {
            let _ = write!(out, ",dd_{a}");
        }
        out.push('\n');
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rounds {
            let ids: Vec<&str> = r.participants.iter().map(ClientId::as_str).collect();
            let sizes: Vec<String> = r.sizes.iter().map(usize::to_string).collect();
            let _ = write!(
                out,
                "{},{},{},{},{}",
                r.round,
                ids.join(";"),
                sizes.join(";"),
                r.train_accuracy,
                opt(r.validation_accuracy)
            );
            for a in &self.attrs {
                let _ = write!(out, ",{}", opt(r.dd.get(a).copied().flatten()));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn last(&self) -> Option<&RoundRecord> {
        self.rounds.last()
    }
}

struct ClientData {
    id: ClientId,
    ordinal: usize,
    data: EncodedData,
    codes: Vec<i64>,
}

/// A prepared federated run. Holds the shared encoding and every client's
/// encoded training rows; rounds can be stepped one at a time.
pub struct Simulation {
    config: FLConfig,
    fair: Option<(FairRegConfig, Vec<i64>)>,
    encoding: FeatureEncoding,
    clients: Vec<ClientData>,
    attrs: Vec<String>,
    pooled_train: Dataset,
    pooled_validation: Dataset,
    train_x: EncodedData,
    validation_x: Option<EncodedData>,
}

impl Simulation {
    pub fn new(fed: &FederatedDataset, config: &FLConfig, fair: Option<&FairRegConfig>) -> Result<Self> {
        config.validate()?;
        if fed.is_empty() {
            return Err(Error::Precondition("federation has no clients".into()));
        }
        let schema = fed.schema();
        let fair = match fair {
            Some(f) => {
                f.validate()?;
                if !schema.is_sensitive(&f.target_attr) {
                    return Err(Error::Precondition(format!(
                        "fair target {} is not a sensitive attribute",
                        f.target_attr
                    )));
                }
                let values = schema.column(&f.target_attr).map(|c| c.values()).unwrap_or_default();
                Some((f.clone(), values))
            }
            None => None,
        };
        let pooled_train = fed.pooled(SplitName::Train);
        if pooled_train.is_empty() {
            return Err(Error::Precondition("no client has training rows".into()));
        }
        let parts: Vec<&Dataset> = fed.clients.values().map(|s| &s.train).collect();
        let encoding = FeatureEncoding::fit(&schema, &parts, &config.encoding)?;
        let mut clients = Vec::new();
        for (ordinal, (id, split)) in fed.clients.iter().enumerate() {
            if split.train.is_empty() {
                log::warn!("client {id} has no training rows and never participates");
                continue;
            }
            let codes = match &fair {
                Some((f, _)) => split.train.categorical(&f.target_attr)?.to_vec(),
                None => Vec::new(),
            };
            clients.push(ClientData {
                id: id.clone(),
                ordinal,
                data: encoding.encode(&split.train)?,
                codes,
            });
        }
        let pooled_validation = fed.pooled(SplitName::Validation);
        let validation_x = if pooled_validation.is_empty() {
            None
        } else {
            Some(encoding.encode(&pooled_validation)?)
        };
        Ok(Simulation {
            config: config.clone(),
            fair,
            train_x: encoding.encode(&pooled_train)?,
            encoding,
            clients,
            attrs: schema.sensitive.clone(),
            pooled_train,
            pooled_validation,
            validation_x,
        })
    }

    pub fn encoding(&self) -> &FeatureEncoding {
        &self.encoding
    }

    pub fn initial_params(&self) -> Vec<f64> {
        init_params(self.encoding.dim(), init_seed(self.config.seed))
    }

    /// Indices (into the participating clients) sampled for `round`, sorted.
    pub fn sample(&self, round: usize) -> Vec<usize> {
        let k = self.clients.len();
        let m = self.config.participants(k);
        let mut picked = rng::permutation(k, derive_seed(self.config.seed, &format!("sample/{round}")));
        picked.truncate(m);
        picked.sort_unstable();
        picked
    }

    /// Runs one round from `params`; returns the aggregate and the sample.
    pub fn step(&self, params: &[f64], round: usize) -> Result<(Vec<f64>, Vec<usize>)> {
        let picked = self.sample(round);
        let local = self.config.local_config();
        let updates: Vec<Vec<f64>> = picked
            .par_iter()
            .map(|&i| {
                let c = &self.clients[i];
                let mut theta = params.to_vec();
                let seed = local_seed(self.config.seed, round, c.ordinal);
                let l2 = local.l2_penalty;
                match &self.fair {
                    Some((f, values)) if f.lambda > 0.0 => {
                        crate::models::descend(&mut theta, c.data.len(), &local, seed, &mut |p, rows, g| {
                            fair_gradient(p, &c.data, &c.codes, values, rows, l2, f.lambda, g)
                        });
                    }
                    _ => crate::models::local_update(&mut theta, &c.data, &local, seed),
                }
                theta
            })
            .collect();
        let sizes: Vec<usize> = picked.iter().map(|&i| self.clients[i].data.len()).collect();
        Ok((aggregate_weighted(&updates, &sizes)?, picked))
    }

    fn hard(params: &[f64], data: &EncodedData) -> Vec<u8> {
        (0..data.len())
            .map(|i| u8::from(sigmoid(logit(params, data.x.row(i))) >= 0.5))
            .collect()
    }

    fn record(&self, params: &[f64], round: usize, picked: &[usize]) -> Result<RoundRecord> {
        let train_preds = Self::hard(params, &self.train_x);
        let validation_accuracy = match &self.validation_x {
            Some(v) => Some(accuracy(&Self::hard(params, v), self.pooled_validation.labels())?),
            None => None,
        };
        let mut dd = BTreeMap::new();
        for a in &self.attrs {
            let value = match demographic_disparity(&train_preds, &self.pooled_train, a) {
                Ok(r) => Some(r.dd),
                Err(Error::Undefined { .. }) => None,
                Err(e) => return Err(e),
            };
            dd.insert(a.clone(), value);
        }
        Ok(RoundRecord {
            round,
            participants: picked.iter().map(|&i| self.clients[i].id.clone()).collect(),
            sizes: picked.iter().map(|&i| self.clients[i].data.len()).collect(),
            train_accuracy: accuracy(&train_preds, self.pooled_train.labels())?,
            validation_accuracy,
            dd,
        })
    }

    /// All rounds from the seeded initial parameters.
    pub fn run(&self) -> Result<(LinearModel, RoundHistory)> {
        let mut params = self.initial_params();
        let mut rounds = Vec::with_capacity(self.config.rounds);
        for r in 0..self.config.rounds {
            let (next, picked) = self.step(&params, r)?;
            params = next;
            rounds.push(self.record(&params, r, &picked)?);
            log::debug!("round {r}: train accuracy {}", rounds[r].train_accuracy);
        }
        let target_met = self.fair.as_ref().map(|(f, _)| {
            rounds
                .last()
                .and_then(|r| r.dd.get(&f.target_attr).copied().flatten())
                .is_some_and(|dd| dd <= f.target_dd)
        });
        let history = RoundHistory {
            config: self.config.clone(),
            fair: self.fair.as_ref().map(|(f, _)| f.clone()),
            attrs: self.attrs.clone(),
            rounds,
            target_met,
        };
        Ok((LinearModel::from_params(self.encoding.clone(), &params)?, history))
    }
}

pub fn run_fedavg(fed: &FederatedDataset, config: &FLConfig) -> Result<(LinearModel, RoundHistory)> {
    Simulation::new(fed, config, None)?.run()
}

pub fn run_fair_fedavg(
    fed: &FederatedDataset,
    config: &FLConfig,
    fair: &FairRegConfig,
) -> Result<(LinearModel, RoundHistory)> {
    Simulation::new(fed, config, Some(fair))?.run()
}

/// Centralized baseline on the concatenated training splits.
pub fn train_pooled(fed: &FederatedDataset, config: &TrainConfig) -> Result<LinearModel> {
    let train = fed.pooled(SplitName::Train);
    if train.is_empty() {
        return Err(Error::Precondition("no client has training rows".into()));
    }
    train_logistic(&SplitSet::train_only(train), config).map(|f| f.model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EvalMode {
    CrossSilo,
    CrossDevice { test_clients: Vec<ClientId> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEvaluation {
    pub client: ClientId,
    pub rows: usize,
    pub accuracy: f64,
    pub dd: FairnessReport,
    pub eod: FairnessReport,
}

/// Accuracy and DD/EOD reports of `model` on one table.
pub fn evaluate_on(
    model: &Model,
    model_id: &str,
    client: &ClientId,
    dataset: &Dataset,
    attrs: &[String],
    level: Level,
) -> Result<ClientEvaluation> {
    if dataset.is_empty() {
        return Err(Error::Precondition(format!("client {client} has no evaluation rows")));
    }
    let pred = predict(model, dataset)?;
    let preds = Predictions::Model {
        id: model_id,
        preds: &pred.labels,
    };
    Ok(ClientEvaluation {
        client: client.clone(),
        rows: dataset.len(),
        accuracy: accuracy(&pred.labels, dataset.labels())?,
        dd: fairness_table(dataset, preds, attrs, Metric::Dd, level)?,
        eod: fairness_table(dataset, preds, attrs, Metric::Eod, level)?,
    })
}

/// Cross-silo: each client's own test split. Cross-device: the full data of
/// each held-out test client.
pub fn evaluate_global(
    model: &Model,
    fed: &FederatedDataset,
    mode: &EvalMode,
    attrs: &[String],
    level: Level,
) -> Result<Vec<ClientEvaluation>> {
    match mode {
        EvalMode::CrossSilo => fed
            .clients
            .iter()
            .map(|(id, s)| evaluate_on(model, "global", id, &s.test, attrs, level))
            .collect(),
        EvalMode::CrossDevice { test_clients } => {
            if test_clients.is_empty() {
                return Err(Error::Precondition("cross-device evaluation needs test clients".into()));
            }
            test_clients
                .iter()
                .map(|id| evaluate_on(model, "global", id, &fed.get(id)?.union(), attrs, level))
                .collect()
        }
    }
}
