//! Evaluation artifacts: per-client statistics, local-vs-global
//! comparisons, SVG figures and the datasheet. Rendering never computes new
//! numbers; everything shown comes from a report or accuracy passed in.

mod datasheet;
mod svg;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use datasheet::{generate_datasheet, DatasheetExtras, DATASHEET_TEMPLATE};
pub use svg::{bar_chart, emit_svg, render_svg, BarGroup, SvgKind};

use crate::error::{Error, Result};
use crate::fairness::{fairness_table, BiasTarget, FairnessReport, Level, Metric, Predictions};
use crate::federation::FederatedDataset;
use crate::fl::ClientEvaluation;
use crate::models::{accuracy, predict, Model};
use crate::tabular::ClientId;

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn sub(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

/// One row of [`client_stats`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientStats {
    pub client: ClientId,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub test_rows: usize,
    /// True-label DD per attribute over all of the client's rows.
    pub true_dd: BTreeMap<String, Option<f64>>,
    /// Local model accuracy on the client's test split.
    pub local_accuracy: Option<f64>,
    /// Local model DD per attribute on the client's test split.
    pub local_dd: BTreeMap<String, Option<f64>>,
}

/// Split sizes and fairness per client. Clients without an entry in
/// `local_models` get empty model columns.
pub fn client_stats(
    fed: &FederatedDataset,
    local_models: &BTreeMap<ClientId, Model>,
    attrs: &[String],
) -> Result<Vec<ClientStats>> {
    let mut rows = Vec::with_capacity(fed.len());
    for (id, split) in &fed.clients {
        let all = split.union();
        let truth = fairness_table(&all, Predictions::TrueLabels, attrs, Metric::Dd, Level::Attribute)?;
        let (local_accuracy, local_dd) = match local_models.get(id) {
            Some(model) if !split.test.is_empty() => {
                let pred = predict(model, &split.test)?;
                let report = fairness_table(
                    &split.test,
                    Predictions::Model {
                        id: "local",
                        preds: &pred.labels,
                    },
                    attrs,
                    Metric::Dd,
                    Level::Attribute,
                )?;
                (
                    Some(accuracy(&pred.labels, split.test.labels())?),
                    attrs.iter().map(|a| (a.clone(), report.max_of(a))).collect(),
                )
            }
            _ => (None, attrs.iter().map(|a| (a.clone(), None)).collect()),
        };
        rows.push(ClientStats {
            client: id.clone(),
            train_rows: split.train.len(),
            validation_rows: split.validation.len(),
            test_rows: split.test.len(),
            true_dd: attrs.iter().map(|a| (a.clone(), truth.max_of(a))).collect(),
            local_accuracy,
            local_dd,
        });
    }
    Ok(rows)
}

/// `client,train_rows,validation_rows,test_rows,true_dd_<a>...,local_accuracy,local_dd_<a>...`
pub fn client_stats_csv(stats: &[ClientStats], attrs: &[String]) -> String {
    let mut out = String::from("client,train_rows,validation_rows,test_rows");
    for a in attrs {
        let _ = write!(out, ",true_dd_{a}");
    }
    out.push_str(",local_accuracy");
    for a in attrs {
        let _ = write!(out, ",local_dd_{a}");
    }
    out.push('\n');
    for s in stats {
        let _ = write!(
            out,
            "{},{},{},{}",
            s.client, s.train_rows, s.validation_rows, s.test_rows
        );
        for a in attrs {
            let _ = write!(out, ",{}", opt(s.true_dd.get(a).copied().flatten()));
        }
        let _ = write!(out, ",{}", opt(s.local_accuracy));
        for a in attrs {
            let _ = write!(out, ",{}", opt(s.local_dd.get(a).copied().flatten()));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrComparison {
    pub attr: String,
    pub local_dd: Option<f64>,
    pub global_dd: Option<f64>,
    /// `global - local`.
    pub delta_dd: Option<f64>,
    pub local_eod: Option<f64>,
    pub global_eod: Option<f64>,
    pub delta_eod: Option<f64>,
    /// Most biased value under the local model, then the global model.
    pub value_before: Option<i64>,
    pub value_after: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientComparison {
    pub client: ClientId,
    pub local_accuracy: f64,
    pub global_accuracy: f64,
    /// Label from the benchmark rule; `None` is the neutral category.
    pub biased_toward: Option<String>,
    pub attrs: Vec<AttrComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub attrs: Vec<String>,
    pub clients: Vec<ClientComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub client: ClientId,
    pub attr: String,
    /// Global-model value.
    pub x: Option<f64>,
    /// Local-model value.
    pub y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueShift {
    pub client: ClientId,
    pub attr: String,
    pub before: Option<i64>,
    pub after: Option<i64>,
}

impl ComparisonReport {
    /// One point per client and attribute; below the diagonal means the
    /// global model is less fair than the local one.
    pub fn scatter_points(&self, metric: Metric) -> Vec<ScatterPoint> {
        let mut out = Vec::new();
        for c in &self.clients {
            for a in &c.attrs {
                let (x, y) = match metric {
                    Metric::Dd => (a.global_dd, a.local_dd),
                    Metric::Eod => (a.global_eod, a.local_eod),
                };
                out.push(ScatterPoint {
                    client: c.client.clone(),
                    attr: a.attr.clone(),
                    x,
                    y,
                });
            }
        }
        out
    }

    pub fn value_shifts(&self) -> Vec<ValueShift> {
        self.clients
            .iter()
            .flat_map(|c| {
                c.attrs.iter().map(|a| ValueShift {
                    client: c.client.clone(),
                    attr: a.attr.clone(),
                    before: a.value_before,
                    after: a.value_after,
                })
            })
            .collect()
    }

    /// Fraction of defined DD pairs where the global value is at least the
    /// local one, for attribute `attr`.
    pub fn share_increased(&self, attr: &str) -> Option<f64> {
        let deltas: Vec<f64> = self
            .clients
            .iter()
            .filter_map(|c| c.attrs.iter().find(|a| a.attr == attr).and_then(|a| a.delta_dd))
            .collect();
        (!deltas.is_empty()).then(|| deltas.iter().filter(|&&d| d >= 0.0).count() as f64 / deltas.len() as f64)
    }

    pub const CSV_HEADER: &'static str = "client,attr,local_accuracy,global_accuracy,local_dd,global_dd,delta_dd,\
local_eod,global_eod,delta_eod,value_before,value_after,biased_toward";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        let code = |v: Option<i64>| v.map(|v| v.to_string()).unwrap_or_default();
        for c in &self.clients {
            for a in &c.attrs {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    c.client,
                    a.attr,
                    c.local_accuracy,
                    c.global_accuracy,
                    opt(a.local_dd),
                    opt(a.global_dd),
                    opt(a.delta_dd),
                    opt(a.local_eod),
                    opt(a.global_eod),
                    opt(a.delta_eod),
                    code(a.value_before),
                    code(a.value_after),
                    c.biased_toward.as_deref().unwrap_or("none"),
                );
            }
        }
        out
    }
}

fn attr_numbers(r: &FairnessReport, attr: &str) -> (Option<f64>, Option<i64>) {
    match r.attribute(attr) {
        Some(a) => (a.max, a.biased_value),
        None => (None, None),
    }
}

/// Pairs local and global evaluations client by client. Both lists must
/// name the same clients in the same order.
pub fn compare(
    local: &[ClientEvaluation],
    global: &[ClientEvaluation],
    labels: &BTreeMap<ClientId, Option<BiasTarget>>,
) -> Result<ComparisonReport> {
    if local.len() != global.len() || local.iter().zip(global).any(|(l, g)| l.client != g.client) {
        return Err(Error::Precondition(
            "local and global evaluations cover different clients".into(),
        ));
    }
    let attrs: Vec<String> = match local.first() {
        Some(e) => e.dd.attributes.iter().map(|a| a.attr.clone()).collect(),
        None => Vec::new(),
    };
    let mut clients = Vec::with_capacity(local.len());
    for (l, g) in local.iter().zip(global) {
        let mut per_attr = Vec::with_capacity(attrs.len());
        for a in &attrs {
            let (local_dd, value_before) = attr_numbers(&l.dd, a);
            let (global_dd, value_after) = attr_numbers(&g.dd, a);
            let local_eod = l.eod.max_of(a);
            let global_eod = g.eod.max_of(a);
            per_attr.push(AttrComparison {
                attr: a.clone(),
                local_dd,
                global_dd,
                delta_dd: sub(global_dd, local_dd),
                local_eod,
                global_eod,
                delta_eod: sub(global_eod, local_eod),
                value_before,
                value_after,
            });
        }
        clients.push(ClientComparison {
            client: l.client.clone(),
            local_accuracy: l.accuracy,
            global_accuracy: g.accuracy,
            biased_toward: labels.get(&l.client).cloned().flatten().map(|t| t.to_string()),
            attrs: per_attr,
        });
    }
    Ok(ComparisonReport { attrs, clients })
}
