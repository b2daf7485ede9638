//! Group fairness: demographic disparity (DD) and equalized odds difference
//! (EOD) at attribute, value and attribute-value granularity, plus the
//! two-model benchmark rule that labels a client as biased.
//!
//! Rates are kept as integer counts and all maxima are found by exact
//! cross-multiplication, so argmax tie-breaking never depends on floating
//! point rounding. Ties go to the lowest value codes, then to the
//! lexicographically lowest attribute name.
//!
//! DD is the pairwise maximum `max_{i,j} |P(Ŷ=1|Z=z_i) - P(Ŷ=1|Z=z_j)|`.
//! One-vs-rest gaps `P(Ŷ=1|Z=z) - P(Ŷ=1|Z≠z)` are reported alongside for
//! value-level views. Groups without rows are excluded with a warning.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Dd,
    Eod,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Dd => "dd",
            Metric::Eod => "eod",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Attribute,
    Value,
    AttributeValue,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Attribute => "attribute",
            Level::Value => "value",
            Level::AttributeValue => "attribute_value",
        }
    }
}

/// Non-negative ratio `num / den` compared exactly.
#[derive(Debug, Clone, Copy)]
struct Ratio {
    num: u128,
    den: u128,
}

impl Ratio {
    fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    fn cmp(&self, other: &Ratio) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

/// `(a/b - c/d)` as a sign and an exact magnitude. `b, d > 0`.
fn gap(a: u64, b: u64, c: u64, d: u64) -> (bool, Ratio) {
    let left = a as u128 * d as u128;
    let right = c as u128 * b as u128;
    let den = b as u128 * d as u128;
    if left >= right {
        (false, Ratio { num: left - right, den })
    } else {
        (true, Ratio { num: right - left, den })
    }
}

fn signed(negative: bool, r: Ratio) -> f64 {
    if negative {
        -r.to_f64()
    } else {
        r.to_f64()
    }
}

/// Counts for one value of a sensitive attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub value: i64,
    pub count: u64,
    pub predicted_positive: u64,
    /// `P(Ŷ=1 | Z=z)`; `None` when the group is empty.
    pub positive_rate: Option<f64>,
    pub label_positive: u64,
    pub true_positive: u64,
    pub false_positive: u64,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
}

impl GroupStat {
    fn label_negative(&self) -> u64 {
        self.count - self.label_positive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub attr: String,
    pub groups: Vec<GroupStat>,
}

impl GroupRates {
    pub fn non_empty(&self) -> impl Iterator<Item = &GroupStat> {
        self.groups.iter().filter(|g| g.count > 0)
    }

    fn total(&self) -> (u64, u64) {
        self.groups
            .iter()
            .fold((0, 0), |(n, p), g| (n + g.count, p + g.predicted_positive))
    }
}

fn check_binary(xs: &[u8], what: &str) -> Result<()> {
    if let Some(i) = xs.iter().position(|&x| x > 1) {
        return Err(Error::Precondition(format!("{what}[{i}] = {} is not binary", xs[i])));
    }
    Ok(())
}

/// Per-value counts and rates. `labels` defaults to the dataset's labels.
pub fn group_rates(preds: &[u8], labels: Option<&[u8]>, dataset: &Dataset, attr: &str) -> Result<GroupRates> {
    let labels = labels.unwrap_or(dataset.labels());
    if preds.len() != dataset.len() || labels.len() != dataset.len() {
        return Err(Error::Precondition(format!(
            "{} predictions / {} labels for {} rows",
            preds.len(),
            labels.len(),
            dataset.len()
        )));
    }
    check_binary(preds, "preds")?;
    check_binary(labels, "labels")?;
    let (codes, values) = dataset.sensitive_codes(attr)?;
    let mut groups: Vec<GroupStat> = values
        .iter()
        .map(|&value| GroupStat {
            value,
            count: 0,
            predicted_positive: 0,
            positive_rate: None,
            label_positive: 0,
            true_positive: 0,
            false_positive: 0,
            tpr: None,
            fpr: None,
        })
        .collect();
    for ((&code, &p), &y) in codes.iter().zip(preds).zip(labels) {
        let Ok(i) = values.binary_search(&code) else {
            return Err(Error::Precondition(format!(
                "{attr} code {code} is not an allowed value"
            )));
        };
        let g = &mut groups[i];
        g.count += 1;
        g.predicted_positive += u64::from(p);
        g.label_positive += u64::from(y);
        g.true_positive += u64::from(p & y);
        g.false_positive += u64::from(p & (1 - y));
    }
    for g in &mut groups {
        let ratio = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
        g.positive_rate = ratio(g.predicted_positive, g.count);
        g.tpr = ratio(g.true_positive, g.label_positive);
        g.fpr = ratio(g.false_positive, g.label_negative());
    }
    Ok(GroupRates {
        attr: attr.to_string(),
        groups,
    })
}

/// Positive-prediction rate per value of `attr`.
pub fn demographic_parity_rates(preds: &[u8], dataset: &Dataset, attr: &str) -> Result<GroupRates> {
    group_rates(preds, None, dataset, attr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueGap {
    pub value: i64,
    /// Signed one-vs-rest gap; `None` when the value or its complement is empty.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGap {
    pub a: i64,
    pub b: i64,
    /// `|rate(a) - rate(b)|`; `None` if either group is empty.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdResult {
    pub dd: f64,
    pub argmax: (i64, i64),
    pub one_vs_rest: Vec<ValueGap>,
    pub pairs: Vec<PairGap>,
    pub warnings: Vec<String>,
}

impl DdResult {
    /// Value with the largest |one-vs-rest gap| (lowest code on ties).
    pub fn most_biased_value(&self) -> Option<i64> {
        self.one_vs_rest
            .iter()
            .filter_map(|v| v.gap.map(|g| (v.value, g.abs())))
            .fold(None, |best: Option<(i64, f64)>, (v, g)| match best {
                Some((_, bg)) if bg >= g => best,
                _ => Some((v, g)),
            })
            .map(|(v, _)| v)
    }
}

fn dd_from_rates(rates: &GroupRates) -> Result<DdResult> {
    let warnings: Vec<String> = rates
        .groups
        .iter()
        .filter(|g| g.count == 0)
        .map(|g| format!("{}={} has no rows; excluded", rates.attr, g.value))
        .collect();
    let live: Vec<&GroupStat> = rates.non_empty().collect();
    if live.len() < 2 {
        return Err(Error::Undefined {
            metric: "DD",
            reason: format!("{} has {} non-empty group(s)", rates.attr, live.len()),
        });
    }
    let mut best: Option<((i64, i64), Ratio)> = None;
    let mut pairs = Vec::new();
    for (i, gi) in rates.groups.iter().enumerate() {
        for gj in &rates.groups[i + 1..] {
            if gi.count == 0 || gj.count == 0 {
                pairs.push(PairGap {
                    a: gi.value,
                    b: gj.value,
                    gap: None,
                });
                continue;
            }
            let (_, r) = gap(gi.predicted_positive, gi.count, gj.predicted_positive, gj.count);
            pairs.push(PairGap {
                a: gi.value,
                b: gj.value,
                gap: Some(r.to_f64()),
            });
            if best.as_ref().is_none_or(|(_, b)| r.cmp(b) == Ordering::Greater) {
                best = Some(((gi.value, gj.value), r));
            }
        }
    }
    let (n, p) = rates.total();
    let one_vs_rest = rates
        .groups
        .iter()
        .map(|g| ValueGap {
            value: g.value,
            gap: (g.count > 0 && g.count < n).then(|| {
                let (neg, r) = gap(g.predicted_positive, g.count, p - g.predicted_positive, n - g.count);
                signed(neg, r)
            }),
        })
        .collect();
    let (argmax, r) = best.expect("at least two live groups");
    Ok(DdResult {
        dd: r.to_f64(),
        argmax,
        one_vs_rest,
        pairs,
        warnings,
    })
}

/// Pairwise-maximum demographic disparity of hard predictions.
pub fn demographic_disparity(preds: &[u8], dataset: &Dataset, attr: &str) -> Result<DdResult> {
    dd_from_rates(&demographic_parity_rates(preds, dataset, attr)?)
}

/// One `(y, z)` cell of the equalized-odds table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsCell {
    pub label: u8,
    pub value: i64,
    /// `P(Ŷ=1|Y=y,Z=z) - P(Ŷ=1|Y=y,Z≠z)`; `None` if either side lacks class `y`.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EodResult {
    pub eod: f64,
    /// `(y, z)`: `y = 1` is a TPR gap, `y = 0` an FPR gap.
    pub argmax: (u8, i64),
    pub cells: Vec<OddsCell>,
    pub warnings: Vec<String>,
}

fn eod_from_rates(rates: &GroupRates) -> Result<EodResult> {
    let live = rates.non_empty().count();
    if live < 2 {
        return Err(Error::Undefined {
            metric: "EOD",
            reason: format!("{} has {live} non-empty group(s)", rates.attr),
        });
    }
    let tot_pos: u64 = rates.groups.iter().map(|g| g.label_positive).sum();
    let tot_neg: u64 = rates.groups.iter().map(GroupStat::label_negative).sum();
    let tot_tp: u64 = rates.groups.iter().map(|g| g.true_positive).sum();
    let tot_fp: u64 = rates.groups.iter().map(|g| g.false_positive).sum();
    let mut cells = Vec::new();
    let mut warnings = Vec::new();
    let mut best: Option<((u8, i64), Ratio)> = None;
    for g in &rates.groups {
        if g.count == 0 {
            warnings.push(format!("{}={} has no rows; excluded", rates.attr, g.value));
        }
        for y in [0u8, 1] {
            let (hits, n_in, hits_out, n_out) = if y == 1 {
                (
                    g.true_positive,
                    g.label_positive,
                    tot_tp - g.true_positive,
                    tot_pos - g.label_positive,
                )
            } else {
                (
                    g.false_positive,
                    g.label_negative(),
                    tot_fp - g.false_positive,
                    tot_neg - g.label_negative(),
                )
            };
            if n_in == 0 || n_out == 0 {
                if g.count > 0 {
                    warnings.push(format!(
                        "{}={} cell Y={y} undefined (group or complement lacks the class)",
                        rates.attr, g.value
                    ));
                }
                cells.push(OddsCell {
                    label: y,
                    value: g.value,
                    gap: None,
                });
                continue;
            }
            let (neg, r) = gap(hits, n_in, hits_out, n_out);
            cells.push(OddsCell {
                label: y,
                value: g.value,
                gap: Some(signed(neg, r)),
            });
            if best.as_ref().is_none_or(|(_, b)| r.cmp(b) == Ordering::Greater) {
                best = Some(((y, g.value), r));
            }
        }
    }
    let Some((argmax, r)) = best else {
        return Err(Error::Undefined {
            metric: "EOD",
            reason: format!("no defined (label, {}) cell", rates.attr),
        });
    };
    Ok(EodResult {
        eod: r.to_f64(),
        argmax,
        cells,
        warnings,
    })
}

/// Largest one-vs-rest TPR or FPR gap over values of `attr`.
pub fn equalized_odds_difference(preds: &[u8], labels: &[u8], dataset: &Dataset, attr: &str) -> Result<EodResult> {
    eod_from_rates(&group_rates(preds, Some(labels), dataset, attr)?)
}

/// Where the predictions in a report came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    TrueLabels,
    Model { id: String },
}

#[derive(Debug, Clone, Copy)]
pub enum Predictions<'a> {
    TrueLabels,
    Model { id: &'a str, preds: &'a [u8] },
}

impl Predictions<'_> {
    fn source(&self) -> Source {
        match self {
            Predictions::TrueLabels => Source::TrueLabels,
            Predictions::Model { id, .. } => Source::Model { id: id.to_string() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Argmax {
    /// DD: the two values whose rates are furthest apart.
    Pair { a: i64, b: i64 },
    /// EOD: the label class and value of the widest gap.
    Cell { label: u8, value: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeFairness {
    pub attr: String,
    /// `None` when the metric is undefined on this data.
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub argmax: Option<Argmax>,
    /// Value carrying the bias: largest |one-vs-rest gap| (DD) or the
    /// argmax cell's value (EOD).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub biased_value: Option<i64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub one_vs_rest: Vec<ValueGap>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<PairGap>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<OddsCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub metric: Metric,
    pub level: Level,
    pub source: Source,
    pub attributes: Vec<AttributeFairness>,
    pub max_attribute: Option<String>,
    pub max_value: Option<f64>,
    pub warnings: Vec<String>,
}

impl FairnessReport {
    pub fn attribute(&self, attr: &str) -> Option<&AttributeFairness> {
        self.attributes.iter().find(|a| a.attr == attr)
    }

    pub fn max_of(&self, attr: &str) -> Option<f64> {
        self.attribute(attr).and_then(|a| a.max)
    }

    /// Long-format rows: `attribute,entry,value_a,value_b,gap`.
    pub fn csv_rows(&self) -> Vec<[String; 5]> {
        let num = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut rows = Vec::new();
        for a in &self.attributes {
            let (va, vb) = match &a.argmax {
                Some(Argmax::Pair { a, b }) => (a.to_string(), b.to_string()),
                Some(Argmax::Cell { label, value }) => (value.to_string(), format!("y={label}")),
                None => (String::new(), String::new()),
            };
            rows.push([a.attr.clone(), "max".into(), va, vb, num(a.max)]);
            if let Some(v) = a.biased_value {
                rows.push([
                    a.attr.clone(),
                    "biased_value".into(),
                    v.to_string(),
                    String::new(),
                    String::new(),
                ]);
            }
            for p in &a.pairs {
                rows.push([
                    a.attr.clone(),
                    "pair".into(),
                    p.a.to_string(),
                    p.b.to_string(),
                    num(p.gap),
                ]);
            }
            for v in &a.one_vs_rest {
                rows.push([
                    a.attr.clone(),
                    "one_vs_rest".into(),
                    v.value.to_string(),
                    String::new(),
                    num(v.gap),
                ]);
            }
            for c in &a.cells {
                let entry = if c.label == 1 { "tpr_gap" } else { "fpr_gap" };
                rows.push([
                    a.attr.clone(),
                    entry.into(),
                    c.value.to_string(),
                    String::new(),
                    num(c.gap),
                ]);
            }
        }
        rows
    }

    pub const CSV_HEADER: [&'static str; 5] = ["attribute", "entry", "value_a", "value_b", "gap"];
}

/// Resolves `attr` on `dataset`, building composite columns for names of
/// the form `A*B` that are not already present.
fn with_attribute(dataset: &Dataset, attr: &str) -> Result<Option<Dataset>> {
    if dataset.schema().index_of(attr).is_some() || !attr.contains('*') {
        return Ok(None);
    }
    let parts: Vec<&str> = attr.split('*').collect();
    let composite = dataset.intersect_groups(&parts)?;
    dataset.with_composite(&composite).map(Some)
}

/// Fairness of `predictions` on `dataset` for each attribute in `attrs`.
/// Attributes on which the metric is undefined get `max = None` and a
/// warning instead of failing the table.
pub fn fairness_table(
    dataset: &Dataset,
    predictions: Predictions<'_>,
    attrs: &[String],
    metric: Metric,
    level: Level,
) -> Result<FairnessReport> {
    if attrs.is_empty() {
        return Err(Error::Precondition(
            "fairness table needs at least one attribute".into(),
        ));
    }
    let preds: &[u8] = match predictions {
        Predictions::TrueLabels => dataset.labels(),
        Predictions::Model { preds, .. } => preds,
    };
    let mut attributes = Vec::with_capacity(attrs.len());
    let mut warnings = Vec::new();
    for attr in attrs {
        let extended = with_attribute(dataset, attr)?;
        let data = extended.as_ref().unwrap_or(dataset);
        let rates = group_rates(preds, None, data, attr)?;
        let mut entry = AttributeFairness {
            attr: attr.clone(),
            max: None,
            argmax: None,
            biased_value: None,
            one_vs_rest: Vec::new(),
            pairs: Vec::new(),
            cells: Vec::new(),
        };
        match metric {
            Metric::Dd => match dd_from_rates(&rates) {
                Ok(r) => {
                    entry.max = Some(r.dd);
                    if level >= Level::Value {
                        entry.argmax = Some(Argmax::Pair {
                            a: r.argmax.0,
                            b: r.argmax.1,
                        });
                        entry.biased_value = r.most_biased_value();
                    }
                    if level == Level::AttributeValue {
                        entry.one_vs_rest = r.one_vs_rest;
                        entry.pairs = r.pairs;
                    }
                    warnings.extend(r.warnings);
                }
                Err(Error::Undefined { reason, .. }) => warnings.push(format!("DD undefined: {reason}")),
                Err(e) => return Err(e),
            },
            Metric::Eod => match eod_from_rates(&rates) {
                Ok(r) => {
                    entry.max = Some(r.eod);
                    if level >= Level::Value {
                        entry.argmax = Some(Argmax::Cell {
                            label: r.argmax.0,
                            value: r.argmax.1,
                        });
                        entry.biased_value = Some(r.argmax.1);
                    }
                    if level == Level::AttributeValue {
                        entry.cells = r.cells;
                    }
                    warnings.extend(r.warnings);
                }
                Err(Error::Undefined { reason, .. }) => warnings.push(format!("EOD undefined: {reason}")),
                Err(e) => return Err(e),
            },
        }
        attributes.push(entry);
    }
    for w in &warnings {
        log::debug!("{w}");
    }
    let top = attributes
        .iter()
        .filter_map(|a| a.max.map(|m| (a.attr.as_str(), m)))
        .fold(None, |best: Option<(&str, f64)>, (name, m)| match best {
            Some((bn, bm)) if bm > m || (bm == m && bn <= name) => best,
            _ => Some((name, m)),
        });
    Ok(FairnessReport {
        metric,
        level,
        source: predictions.source(),
        max_attribute: top.map(|(n, _)| n.to_string()),
        max_value: top.map(|(_, m)| m),
        attributes,
        warnings,
    })
}

/// What a client is labelled as biased toward.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BiasTarget {
    Attribute { attr: String },
    Value { attr: String, value: i64 },
}

impl BiasTarget {
    pub fn attr(&self) -> &str {
        match self {
            BiasTarget::Attribute { attr } | BiasTarget::Value { attr, .. } => attr,
        }
    }
}

impl fmt::Display for BiasTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BiasTarget::Attribute { attr } => f.write_str(attr),
            BiasTarget::Value { attr, value } => write!(f, "{attr}={value}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Attribute,
    Value,
}

fn identity(report: &FairnessReport, granularity: Granularity) -> Result<Option<BiasTarget>> {
    let Some(attr) = report.max_attribute.clone() else {
        return Ok(None);
    };
    match granularity {
        Granularity::Attribute => Ok(Some(BiasTarget::Attribute { attr })),
        Granularity::Value => {
            if report.level < Level::Value {
                return Err(Error::Precondition(
                    "value granularity needs value-level reports".into(),
                ));
            }
            Ok(report
                .attribute(&attr)
                .and_then(|a| a.biased_value)
                .map(|value| BiasTarget::Value { attr, value }))
        }
    }
}

/// Benchmark rule: a client is biased toward X iff every model's report
/// puts its maximum on X and the smallest of those maxima exceeds
/// `threshold` (strictly).
pub fn bias_label(reports: &[FairnessReport], threshold: f64, granularity: Granularity) -> Result<Option<BiasTarget>> {
    if reports.len() < 2 {
        return Err(Error::Precondition(format!(
            "bias labelling needs at least two model reports, got {}",
            reports.len()
        )));
    }
    let names = |r: &FairnessReport| r.attributes.iter().map(|a| a.attr.clone()).collect::<Vec<_>>();
    let first = names(&reports[0]);
    if reports
        .iter()
        .any(|r| names(r) != first || r.metric != reports[0].metric)
    {
        return Err(Error::Precondition(
            "reports cover different attributes or metrics".into(),
        ));
    }
    let mut common: Option<BiasTarget> = None;
    let mut min_max = f64::INFINITY;
    for report in reports {
        let (Some(target), Some(max)) = (identity(report, granularity)?, report.max_value) else {
            return Ok(None);
        };
        match &common {
            Some(c) if *c != target => return Ok(None),
            _ => common = Some(target),
        }
        min_max = min_max.min(max);
    }
    Ok(common.filter(|_| min_max > threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{ColumnSchema, Schema};
    use std::sync::Arc;

    fn table(codes: &[i64], values: &[i64], labels: &[u8]) -> Dataset {
        let schema = Arc::new(Schema::new(
            vec![ColumnSchema::categorical("Z", values.iter().copied())],
            "Y",
            vec!["Z".into()],
        ));
        let rows: Vec<Vec<f64>> = codes.iter().map(|&c| vec![c as f64]).collect();
        Dataset::from_rows(schema, &rows, labels.to_vec()).unwrap()
    }

    #[test]
    fn parity_rates_by_hand() {
        let d = table(&[1, 1, 1, 1, 2, 2, 2, 2], &[1, 2], &[0; 8]);
        let r = demographic_parity_rates(&[1, 1, 0, 0, 1, 0, 0, 0], &d, "Z").unwrap();
        assert_eq!(r.groups[0].positive_rate, Some(0.5));
        assert_eq!(r.groups[1].positive_rate, Some(0.25));
        let all = demographic_parity_rates(&[1; 8], &d, "Z").unwrap();
        assert!(all.groups.iter().all(|g| g.positive_rate == Some(1.0)));
        assert!(demographic_parity_rates(&[1; 7], &d, "Z").is_err());
    }

    #[test]
    fn empty_group_is_flagged() {
        let d = table(&[1, 1, 2, 2], &[1, 2, 3], &[0; 4]);
        let r = demographic_parity_rates(&[1, 0, 0, 0], &d, "Z").unwrap();
        assert_eq!(r.groups[2].count, 0);
        assert_eq!(r.groups[2].positive_rate, None);
        let dd = demographic_disparity(&[1, 0, 0, 0], &d, "Z").unwrap();
        assert_eq!(dd.dd, 0.5);
        assert_eq!(dd.warnings.len(), 1);
    }

    #[test]
    fn dd_pairwise_max_three_groups() {
        // rates A=3/4, B=1/4, C=2/4
        let codes = [1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3];
        let preds = [1, 1, 1, 0, 1, 0, 0, 0, 1, 1, 0, 0];
        let d = table(&codes, &[1, 2, 3], &[0; 12]);
        let r = demographic_disparity(&preds, &d, "Z").unwrap();
        assert_eq!(r.dd, 0.5);
        assert_eq!(r.argmax, (1, 2));
        assert_eq!(demographic_disparity(&[1; 12], &d, "Z").unwrap().dd, 0.0);
    }

    #[test]
    fn dd_needs_two_groups() {
        let d = table(&[1, 1], &[1, 2], &[0, 1]);
        let err = demographic_disparity(&[0, 1], &d, "Z").unwrap_err();
        assert!(matches!(err, Error::Undefined { .. }));
    }

    #[test]
    fn eod_hand_built_tpr_gap() {
        // TPR: Z=1 4/4, Z=2 2/4 -> gap 0.5. FPR: Z=1 1/4, Z=2 0/4 -> gap 0.25.
        let codes = [1, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2];
        let labels = [1, 1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0];
        let preds = [1, 1, 1, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0];
        let d = table(&codes, &[1, 2], &labels);
        let r = equalized_odds_difference(&preds, &labels, &d, "Z").unwrap();
        assert_eq!(r.eod, 0.5);
        assert_eq!(r.argmax, (1, 1));
        let perfect = equalized_odds_difference(&labels, &labels, &d, "Z").unwrap();
        assert_eq!(perfect.eod, 0.0);
    }

    #[test]
    fn eod_missing_class_cell_excluded() {
        // Z=2 has only positives -> FPR cells undefined for both values.
        let codes = [1, 1, 1, 2, 2];
        let labels = [1, 0, 0, 1, 1];
        let preds = [1, 1, 0, 0, 1];
        let d = table(&codes, &[1, 2], &labels);
        let r = equalized_odds_difference(&preds, &labels, &d, "Z").unwrap();
        assert_eq!(r.eod, 0.5);
        assert!(r.cells.iter().filter(|c| c.label == 0).all(|c| c.gap.is_none()));
        assert!(!r.warnings.is_empty());
    }

    fn report(max: &[(&str, f64)], value: Option<i64>) -> FairnessReport {
        let attributes = max
            .iter()
            .map(|(a, m)| AttributeFairness {
                attr: a.to_string(),
                max: Some(*m),
                argmax: None,
                biased_value: value,
                one_vs_rest: vec![],
                pairs: vec![],
                cells: vec![],
            })
            .collect::<Vec<_>>();
        let (name, m) = max
            .iter()
            .copied()
            .fold(("", f64::MIN), |b, x| if x.1 > b.1 { x } else { b });
        FairnessReport {
            metric: Metric::Dd,
            level: Level::Value,
            source: Source::TrueLabels,
            attributes,
            max_attribute: Some(name.to_string()),
            max_value: Some(m),
            warnings: vec![],
        }
    }

    #[test]
    fn bias_label_rule() {
        let a = report(&[("SEX", 0.12), ("RAC1P", 0.05)], Some(2));
        let b = report(&[("SEX", 0.10), ("RAC1P", 0.02)], Some(2));
        assert_eq!(
            bias_label(&[a.clone(), b.clone()], 0.09, Granularity::Attribute).unwrap(),
            Some(BiasTarget::Attribute { attr: "SEX".into() })
        );
        assert_eq!(
            bias_label(&[a.clone(), b], 0.09, Granularity::Value).unwrap(),
            Some(BiasTarget::Value {
                attr: "SEX".into(),
                value: 2
            })
        );
        let low = report(&[("SEX", 0.08), ("RAC1P", 0.02)], Some(2));
        assert_eq!(
            bias_label(&[a.clone(), low], 0.09, Granularity::Attribute).unwrap(),
            None
        );
        let other = report(&[("SEX", 0.10), ("RAC1P", 0.20)], Some(2));
        assert_eq!(
            bias_label(&[a.clone(), other], 0.09, Granularity::Attribute).unwrap(),
            None
        );
        let mismatched = report(&[("SEX", 0.12)], Some(2));
        assert!(bias_label(&[a.clone(), mismatched], 0.09, Granularity::Attribute).is_err());
        assert!(bias_label(&[a], 0.09, Granularity::Attribute).is_err());
    }
}
