//! Benchmark constructions.
//!
//! Silo recipes push each client toward the bias it already leans to: the
//! models trained on the untouched client pick the attribute (or value) with
//! the largest disparity, then negatives of that attribute's highest-rate
//! group are dropped from the training split in growing fractions until the
//! labelling rule accepts the client. Device recipes cut every silo client
//! into IID parts and keep the parts that satisfy the same rule.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bias::{
    application_seed, eligible_rows, exacerbate_to_threshold, group_positive_rates, model_reports, AppliedModification,
    Exacerbation, GroupSelector, Modification, ModificationKind, SearchRule,
};
use crate::error::{Error, Result};
use crate::fairness::{bias_label, BiasTarget, FairnessReport, Granularity};
use crate::federation::{DeviceRecord, FederatedDataset, SearchOutcome, ThresholdRule};
use crate::models::TrainerSpec;
use crate::partition::{assign_device_roles, partition_iid, split_train_val_test, sub_client_id};
use crate::rng::{self, derive_seed};
use crate::tabular::{ClientId, SplitName, SplitSet};

/// Threshold-search settings shared by the silo and device recipes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSearch {
    pub attrs: Vec<String>,
    #[serde(flatten)]
    pub rule: SearchRule,
    pub trainers: Vec<TrainerSpec>,
}

impl ThresholdSearch {
    pub fn validate(&self) -> Result<()> {
        self.rule.validate()?;
        if self.attrs.is_empty() {
            return Err(Error::Precondition("threshold search needs attributes".into()));
        }
        if self.trainers.len() < 2 {
            return Err(Error::Precondition(
                "threshold search needs at least two trainers".into(),
            ));
        }
        self.trainers.iter().try_for_each(TrainerSpec::validate)
    }

    pub fn record(&self) -> ThresholdRule {
        ThresholdRule {
            threshold: self.rule.threshold,
            step: self.rule.step,
            max_fraction: self.rule.max_fraction,
            level: self.rule.level(),
            attrs: self.attrs.clone(),
            models: self.trainers.iter().map(|t| t.id().to_string()).collect(),
        }
    }

    /// DD reports of every trainer on `split` and the resulting label.
    pub fn label(&self, split: &SplitSet) -> Result<(Vec<FairnessReport>, Option<BiasTarget>)> {
        let reports = model_reports(split, &self.trainers, &self.attrs, self.rule.level())?;
        let label = bias_label(&reports, self.rule.threshold, self.rule.granularity)?;
        Ok((reports, label))
    }
}

/// What a silo client is pushed toward and which group loses negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientPlan {
    pub expected: BiasTarget,
    pub drop: GroupSelector,
}

/// Attribute whose smallest maximum over the model reports is largest
/// (first listed on ties).
fn dominant_attribute(reports: &[FairnessReport], attrs: &[String]) -> Option<String> {
    let mut best: Option<(&String, f64)> = None;
    for a in attrs {
        let Some(m) = reports
            .iter()
            .map(|r| r.max_of(a))
            .try_fold(f64::INFINITY, |acc, x| x.map(|v| acc.min(v)))
        else {
            continue;
        };
        if best.is_none_or(|(_, b)| m > b) {
            best = Some((a, m));
        }
    }
    best.map(|(a, _)| a.clone())
}

/// Value of `attr` with the highest positive rate on the training rows
/// (lowest code on ties).
fn highest_rate_value(split: &SplitSet, attr: &str) -> Result<Option<i64>> {
    let rates = group_positive_rates(&split.train, attr)?;
    Ok(rates
        .into_iter()
        .filter_map(|(v, r)| r.map(|r| (v, r)))
        .fold(None, |best: Option<(i64, f64)>, (v, r)| match best {
            Some((_, b)) if b >= r => best,
            _ => Some((v, r)),
        })
        .map(|(v, _)| v))
}

/// Picks the target from reports on the untouched client.
pub fn plan_client(
    split: &SplitSet,
    reports: &[FairnessReport],
    search: &ThresholdSearch,
) -> Result<Option<ClientPlan>> {
    let Some(attr) = dominant_attribute(reports, &search.attrs) else {
        return Ok(None);
    };
    let Some(top) = highest_rate_value(split, &attr)? else {
        return Ok(None);
    };
    let plan = match search.rule.granularity {
        Granularity::Attribute => ClientPlan {
            expected: BiasTarget::Attribute { attr: attr.clone() },
            drop: GroupSelector { attr, value: top },
        },
        Granularity::Value => {
            let fairness = reports[0].attribute(&attr);
            let Some(value) = fairness.and_then(|a| a.biased_value) else {
                return Ok(None);
            };
            let favoured = fairness
                .and_then(|a| a.one_vs_rest.iter().find(|g| g.value == value))
                .and_then(|g| g.gap)
                .is_some_and(|g| g > 0.0);
            let drop_value = if favoured { value } else { top };
            ClientPlan {
                expected: BiasTarget::Value {
                    attr: attr.clone(),
                    value,
                },
                drop: GroupSelector {
                    attr,
                    value: drop_value,
                },
            }
        }
    };
    Ok(Some(plan))
}

struct ClientResult {
    split: SplitSet,
    outcome: SearchOutcome,
    applied: Option<AppliedModification>,
}

fn exacerbate_client(id: &ClientId, split: &SplitSet, search: &ThresholdSearch, seed: u64) -> Result<ClientResult> {
    let unmet = |split: &SplitSet, target: Option<String>| ClientResult {
        split: split.clone(),
        outcome: SearchOutcome {
            client: id.clone(),
            biased_toward: target,
            drop_fraction: None,
            met: false,
        },
        applied: None,
    };
    let reports = match model_reports(split, &search.trainers, &search.attrs, search.rule.level()) {
        Ok(r) => r,
        Err(Error::Training(msg)) => {
            log::warn!("client {id}: {msg}");
            return Ok(unmet(split, None));
        }
        Err(e) => return Err(e),
    };
    let Some(plan) = plan_client(split, &reports, search)? else {
        log::warn!("client {id}: no attribute has a defined disparity");
        return Ok(unmet(split, None));
    };
    let template = Modification {
        splits: vec![SplitName::Train],
        clients: vec![id.clone()],
        seed: derive_seed(seed, "exacerbate"),
        ..Modification::new(ModificationKind::Drop, plan.drop.attr.clone(), plan.drop.value, 0.0)
    };
    let selection = application_seed(&template, id, SplitName::Train);
    let result = exacerbate_to_threshold(
        split,
        &plan.drop,
        None,
        &plan.expected,
        &search.attrs,
        &search.rule,
        &search.trainers,
        selection,
    )?;
    match result {
        Exacerbation::Met {
            split: modified,
            fraction,
            ..
        } => {
            let modification = Modification { fraction, ..template };
            let eligible = eligible_rows(&split.train, &modification)?.len();
            let applied = (fraction > 0.0).then(|| AppliedModification {
                client: id.clone(),
                split: SplitName::Train,
                affected: rng::rounded_share(fraction, eligible),
                modification,
                eligible,
            });
            Ok(ClientResult {
                split: modified,
                outcome: SearchOutcome {
                    client: id.clone(),
                    biased_toward: Some(plan.expected.to_string()),
                    drop_fraction: Some(fraction),
                    met: true,
                },
                applied,
            })
        }
        Exacerbation::Unmet { best_fraction, .. } => {
            log::warn!(
                "client {id}: {} not reached (best fraction {best_fraction})",
                plan.expected
            );
            Ok(unmet(split, Some(plan.expected.to_string())))
        }
    }
}

/// Runs the threshold search on every client. Clients that never meet the
/// rule stay untouched and are recorded with `met = false`.
pub fn exacerbate_federation(fed: &FederatedDataset, search: &ThresholdSearch, seed: u64) -> Result<FederatedDataset> {
    search.validate()?;
    let results: Vec<(ClientId, ClientResult)> = fed
        .clients
        .par_iter()
        .map(|(id, split)| {
            let client_seed = derive_seed(seed, &format!("search/{id}"));
            exacerbate_client(id, split, search, client_seed).map(|r| (id.clone(), r))
        })
        .collect::<Result<_>>()?;
    let mut out = fed.clone();
    out.record.threshold_rule = Some(search.record());
    out.record.seeds.insert("threshold_search".into(), seed);
    for (id, r) in results {
        out.clients.insert(id, r.split);
        out.record.threshold_outcomes.push(r.outcome);
        out.record.modifications.extend(r.applied);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub parts_per_client: usize,
    pub test_client_fraction: f64,
}

impl DeviceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.parts_per_client == 0 {
            return Err(Error::Precondition("parts_per_client must be >= 1".into()));
        }
        if !(self.test_client_fraction > 0.0 && self.test_client_fraction < 1.0) {
            return Err(Error::Precondition("test_client_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Cuts every client into IID parts, re-splits each part, and keeps the
/// parts whose label agrees with the parent's recorded target (any label
/// when the parent has none). Kept parts are divided into training and
/// testing clients.
pub fn device_federation(
    fed: &FederatedDataset,
    device: &DeviceConfig,
    search: &ThresholdSearch,
    seed: u64,
) -> Result<FederatedDataset> {
    device.validate()?;
    search.validate()?;
    let parent_targets: BTreeMap<&ClientId, &str> = fed
        .record
        .threshold_outcomes
        .iter()
        .filter(|o| o.met)
        .filter_map(|o| o.biased_toward.as_deref().map(|t| (&o.client, t)))
        .collect();
    let n = device.parts_per_client;
    let per_parent: Vec<Vec<(ClientId, SplitSet, bool)>> = fed
        .clients
        .par_iter()
        .map(|(id, split)| {
            let parts = partition_iid(&split.union(), n, derive_seed(seed, &format!("device/{id}")))?;
            let mut out = Vec::with_capacity(n);
            for (i, part) in parts.into_iter().enumerate() {
                let sub = sub_client_id(id, i, n);
                let split = split_train_val_test(
                    &part,
                    fed.record.split,
                    derive_seed(seed, &format!("device/split/{sub}")),
                )?;
                let label = match search.label(&split) {
                    Ok((_, label)) => label,
                    Err(Error::Training(_) | Error::Undefined { .. }) => None,
                    Err(e) => return Err(e),
                };
                let keep = match (label, parent_targets.get(id)) {
                    (Some(l), Some(t)) => l.to_string() == *t,
                    (Some(_), None) => true,
                    (None, _) => false,
                };
                out.push((sub, split, keep));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut clients = BTreeMap::new();
    let mut rejected = Vec::new();
    for (sub, split, keep) in per_parent.into_iter().flatten() {
        if keep {
            clients.insert(sub, split);
        } else {
            rejected.push(sub);
        }
    }
    let kept: Vec<ClientId> = clients.keys().cloned().collect();
    if kept.len() < 2 {
        return Err(Error::Infeasible(format!(
            "only {} sub-clients satisfy the bias rule; need at least 2",
            kept.len()
        )));
    }
    let roles_seed = derive_seed(seed, "device/roles");
    let (train_clients, test_clients) = assign_device_roles(&kept, device.test_client_fraction, roles_seed)?;
    let mut record = fed.record.clone();
    record.seeds.insert("device".into(), seed);
    record.device = Some(DeviceRecord {
        parts_per_client: n,
        kept,
        rejected,
        train_clients,
        test_clients,
        test_client_fraction: device.test_client_fraction,
    });
    FederatedDataset::new(clients, record)
}
