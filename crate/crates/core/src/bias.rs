//! Controlled bias exacerbation on negative-label rows.
//!
//! A modification targets rows with `Y = 0` in a group `attr = value`,
//! optionally narrowed by a second `attr = value` pair (intersectional
//! targeting). Exactly `round(fraction * |eligible|)` eligible rows are
//! flipped to `Y = 1` or dropped, chosen by a seeded permutation; rounding is
//! half away from zero. Nothing outside the eligible set is touched.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::{
    bias_label, fairness_table, BiasTarget, FairnessReport, Granularity, Level, Metric, Predictions,
};
use crate::federation::FederatedDataset;
use crate::models::{predict, TrainerSpec};
use crate::rng::{self, derive_seed};
use crate::tabular::{ClientId, Dataset, SplitName, SplitSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModificationKind {
    Flip,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSelector {
    pub attr: String,
    pub value: i64,
}

fn all_splits() -> Vec<SplitName> {
    SplitName::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Modification {
    pub kind: ModificationKind,
    pub attr: String,
    pub value: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary: Option<GroupSelector>,
    pub fraction: f64,
    /// Splits to modify; all three when omitted.
    #[serde(default = "all_splits")]
    pub splits: Vec<SplitName>,
    /// Clients to modify; every client when empty.
    #[serde(default)]
    pub clients: Vec<ClientId>,
    #[serde(default)]
    pub seed: u64,
}

impl Modification {
    pub fn new(kind: ModificationKind, attr: impl Into<String>, value: i64, fraction: f64) -> Self {
        Modification {
            kind,
            attr: attr.into(),
            value,
            secondary: None,
            fraction,
            splits: all_splits(),
            clients: Vec::new(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::Precondition(format!(
                "fraction {} outside [0, 1]",
                self.fraction
            )));
        }
        if let Some(s) = &self.secondary {
            if s.attr == self.attr {
                return Err(Error::Precondition(
                    "secondary attribute must differ from the primary".into(),
                ));
            }
        }
        Ok(())
    }

    fn describe(&self) -> String {
        let mut s = format!(
            "{} {}={}",
            match self.kind {
                ModificationKind::Flip => "flip",
                ModificationKind::Drop => "drop",
            },
            self.attr,
            self.value
        );
        if let Some(sec) = &self.secondary {
            s.push_str(&format!(" & {}={}", sec.attr, sec.value));
        }
        s
    }
}

/// Result of one modification on one table.
#[derive(Debug, Clone, PartialEq)]
pub struct Modified {
    pub dataset: Dataset,
    pub eligible: usize,
    /// Row ids that were flipped or dropped.
    pub affected: Vec<u64>,
}

/// Row indices with `Y = 0` matching the target (and secondary) group.
pub fn eligible_rows(dataset: &Dataset, m: &Modification) -> Result<Vec<usize>> {
    m.validate()?;
    let primary = dataset.group_index(&m.attr, m.value)?;
    let secondary = match &m.secondary {
        Some(s) => Some(dataset.categorical(&s.attr).and_then(|codes| {
            dataset.group_index(&s.attr, s.value)?;
            Ok((codes, s.value))
        })?),
        None => None,
    };
    let labels = dataset.labels();
    Ok(primary
        .into_iter()
        .filter(|&i| labels[i] == 0)
        .filter(|&i| secondary.is_none_or(|(codes, v)| codes[i] == v))
        .collect())
}

fn select(dataset: &Dataset, m: &Modification, seed: u64) -> Result<(Vec<usize>, usize)> {
    let eligible = eligible_rows(dataset, m)?;
    let k = rng::rounded_share(m.fraction, eligible.len());
    if eligible.is_empty() && m.fraction > 0.0 {
        log::warn!("{}: no eligible negative rows; nothing to do", m.describe());
    }
    let perm = rng::permutation(eligible.len(), seed);
    let mut chosen: Vec<usize> = perm[..k].iter().map(|&p| eligible[p]).collect();
    chosen.sort_unstable();
    Ok((chosen, eligible.len()))
}

/// Flips `round(fraction * |eligible|)` eligible labels from 0 to 1.
pub fn flip_negative_labels(dataset: &Dataset, m: &Modification, seed: u64) -> Result<Modified> {
    if m.kind != ModificationKind::Flip {
        return Err(Error::Precondition(
            "flip_negative_labels needs a flip modification".into(),
        ));
    }
    let (chosen, eligible) = select(dataset, m, seed)?;
    let mut labels = dataset.labels().to_vec();
    for &i in &chosen {
        labels[i] = 1;
    }
    Ok(Modified {
        affected: chosen.iter().map(|&i| dataset.row_ids()[i]).collect(),
        dataset: dataset.with_labels(labels)?,
        eligible,
    })
}

/// Removes `round(fraction * |eligible|)` eligible rows.
pub fn drop_negative_rows(dataset: &Dataset, m: &Modification, seed: u64) -> Result<Modified> {
    if m.kind != ModificationKind::Drop {
        return Err(Error::Precondition(
            "drop_negative_rows needs a drop modification".into(),
        ));
    }
    let (chosen, eligible) = select(dataset, m, seed)?;
    let mut keep = vec![true; dataset.len()];
    for &i in &chosen {
        keep[i] = false;
    }
    Ok(Modified {
        affected: chosen.iter().map(|&i| dataset.row_ids()[i]).collect(),
        dataset: dataset.filter(|i| keep[i]),
        eligible,
    })
}

pub fn apply_one(dataset: &Dataset, m: &Modification, seed: u64) -> Result<Modified> {
    match m.kind {
        ModificationKind::Flip => flip_negative_labels(dataset, m, seed),
        ModificationKind::Drop => drop_negative_rows(dataset, m, seed),
    }
}

/// One modification as applied to one client split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedModification {
    pub client: ClientId,
    pub split: SplitName,
    pub modification: Modification,
    pub eligible: usize,
    pub affected: usize,
}

/// Selection seed for one (modification, client, split).
pub fn application_seed(m: &Modification, client: &ClientId, split: SplitName) -> u64 {
    derive_seed(m.seed, &format!("modify/{client}/{}", split.as_str()))
}

/// Applies `mods` in list order to every listed client and split and
/// appends each application to the generation record.
pub fn apply_modifications(fed: &FederatedDataset, mods: &[Modification]) -> Result<FederatedDataset> {
    for m in mods {
        m.validate()?;
        for c in &m.clients {
            fed.get(c)?;
        }
    }
    let mut out = fed.clone();
    for m in mods {
        let targets: Vec<ClientId> = if m.clients.is_empty() {
            out.client_ids()
        } else {
            m.clients.clone()
        };
        for client in targets {
            let split = out.clients.get_mut(&client).expect("validated");
            for &name in &m.splits {
                let part = split.get_mut(name);
                let res = apply_one(part, m, application_seed(m, &client, name))?;
                *part = res.dataset;
                out.record.modifications.push(AppliedModification {
                    client: client.clone(),
                    split: name,
                    modification: m.clone(),
                    eligible: res.eligible,
                    affected: res.affected.len(),
                });
            }
        }
    }
    Ok(out)
}

/// Threshold search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRule {
    pub threshold: f64,
    pub step: f64,
    pub max_fraction: f64,
    pub granularity: Granularity,
}

impl Default for SearchRule {
    fn default() -> Self {
        SearchRule {
            threshold: 0.09,
            step: 0.1,
            max_fraction: 0.9,
            granularity: Granularity::Attribute,
        }
    }
}

impl SearchRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) || !(self.step > 0.0) || self.step > self.max_fraction || self.max_fraction > 1.0 {
            return Err(Error::Precondition(
                "need threshold > 0 and 0 < step <= max_fraction <= 1".into(),
            ));
        }
        Ok(())
    }

    /// `0, step, 2 step, ...` up to `max_fraction`, rounded to 12 decimals.
    pub fn fractions(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0u32;
        loop {
            let f = ((f64::from(k) * self.step) * 1e12).round() / 1e12;
            if f > self.max_fraction + 1e-12 {
                break;
            }
            out.push(f);
            k += 1;
        }
        out
    }

    pub fn level(&self) -> Level {
        match self.granularity {
            Granularity::Attribute => Level::Attribute,
            Granularity::Value => Level::Value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Exacerbation {
    Met {
        split: SplitSet,
        fraction: f64,
        reports: Vec<FairnessReport>,
    },
    Unmet {
        best_fraction: f64,
        best_reports: Vec<FairnessReport>,
    },
}

/// DD reports of every trainer, trained on `split.train` and evaluated on
/// `split.test`.
pub fn model_reports(
    split: &SplitSet,
    trainers: &[TrainerSpec],
    attrs: &[String],
    level: Level,
) -> Result<Vec<FairnessReport>> {
    trainers
        .iter()
        .map(|t| {
            let model = t.fit(split)?;
            let pred = predict(&model, &split.test)?;
            fairness_table(
                &split.test,
                Predictions::Model {
                    id: t.id(),
                    preds: &pred.labels,
                },
                attrs,
                Metric::Dd,
                level,
            )
        })
        .collect()
}

/// Tries drop fractions `0, step, ..` on the training split (always starting
/// from the original rows) until every trainer agrees that the client is
/// biased toward `expected` with all maxima above the threshold. `seed` is
/// the row-selection seed of every drop.
#[allow(clippy::too_many_arguments)]
pub fn exacerbate_to_threshold(
    split: &SplitSet,
    drop: &GroupSelector,
    secondary: Option<&GroupSelector>,
    expected: &BiasTarget,
    attrs: &[String],
    rule: &SearchRule,
    trainers: &[TrainerSpec],
    seed: u64,
) -> Result<Exacerbation> {
    rule.validate()?;
    let level = rule.level();
    let mut best: Option<(f64, f64, Vec<FairnessReport>)> = None;
    for fraction in rule.fractions() {
        let mut candidate = split.clone();
        if fraction > 0.0 {
            let m = Modification {
                secondary: secondary.cloned(),
                splits: vec![SplitName::Train],
                ..Modification::new(ModificationKind::Drop, drop.attr.clone(), drop.value, fraction)
            };
            candidate.train = drop_negative_rows(&split.train, &m, seed)?.dataset;
        }
        let reports = match model_reports(&candidate, trainers, attrs, level) {
            Ok(r) => r,
            Err(Error::Training(msg)) => {
                log::warn!("fraction {fraction}: {msg}");
                continue;
            }
            Err(e) => return Err(e),
        };
        if bias_label(&reports, rule.threshold, rule.granularity)?.as_ref() == Some(expected) {
            return Ok(Exacerbation::Met {
                split: candidate,
                fraction,
                reports,
            });
        }
        let strength = reports
            .iter()
            .map(|r| r.max_of(expected.attr()).unwrap_or(0.0))
            .fold(f64::INFINITY, f64::min);
        if best.as_ref().is_none_or(|(s, _, _)| strength > *s) {
            best = Some((strength, fraction, reports));
        }
    }
    let (_, best_fraction, best_reports) = best.unwrap_or((0.0, 0.0, Vec::new()));
    Ok(Exacerbation::Unmet {
        best_fraction,
        best_reports,
    })
}

/// Per-group positive rate, for before/after comparisons.
pub fn group_positive_rates(dataset: &Dataset, attr: &str) -> Result<BTreeMap<i64, Option<f64>>> {
    let (codes, values) = dataset.sensitive_codes(attr)?;
    let mut out = BTreeMap::new();
    for v in values {
        let (mut n, mut p) = (0usize, 0usize);
        for (c, y) in codes.iter().zip(dataset.labels()) {
            if *c == v {
                n += 1;
                p += usize::from(*y);
            }
        }
        out.insert(v, (n > 0).then(|| p as f64 / n as f64));
    }
    Ok(out)
}
