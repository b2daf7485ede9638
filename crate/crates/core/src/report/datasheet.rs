//! Markdown datasheet from a fixed template with `{{key}}` placeholders.
//!
//! The key set is the generation record's fields plus a few extras. A
//! placeholder with no value and a value with no placeholder are both
//! errors, so template and record cannot drift apart silently.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::bias::ModificationKind;
use crate::error::{Error, Result};
use crate::fairness::FairnessReport;
use crate::federation::{DataSource, GenerationRecord};
use crate::fl::{FLConfig, FairRegConfig};
use crate::tabular::{ClientId, ColumnKind};

pub const DATASHEET_TEMPLATE: &str = include_str!("../../templates/datasheet.md");

/// Values outside the generation record.
#[derive(Debug, Clone, Default)]
pub struct DatasheetExtras {
    pub fl: Option<FLConfig>,
    pub fair: Option<FairRegConfig>,
    /// True-label (or model) fairness per client.
    pub fairness: Vec<(ClientId, FairnessReport)>,
    /// The pipeline configuration, embedded verbatim.
    pub pipeline_config: Option<String>,
}

fn code_block(body: &str) -> String {
    format!("```json\n{}\n```", body.trim_end())
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(code_block(&serde_json::to_string_pretty(v)?))
}

fn ids(list: &[ClientId]) -> String {
    if list.is_empty() {
        "(none)".into()
    } else {
        list.iter().map(ClientId::as_str).collect::<Vec<_>>().join(", ")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_else(|| "undefined".into())
}

fn record_values(record: &GenerationRecord) -> Result<BTreeMap<&'static str, String>> {
    // Exhaustive on purpose: a new record field fails to compile here.
    let GenerationRecord {
        library_version,
        base_task,
        year,
        horizon,
        states,
        source,
        schema,
        remap,
        partition,
        split,
        master_seed,
        seeds,
        modifications,
        threshold_rule,
        threshold_outcomes,
        device,
        notes,
    } = record;
    let mut v = BTreeMap::new();
    v.insert("library_version", library_version.clone());
    v.insert("base_task", base_task.clone());
    v.insert("year", year.to_string());
    v.insert("horizon", horizon.clone());
    v.insert(
        "states",
        if states.is_empty() {
            "(not restricted)".into()
        } else {
            states.join(", ")
        },
    );
    v.insert(
        "source",
        match source {
            DataSource::Synthetic(spec) => format!("synthetic generator\n\n{}", json(spec)?),
            DataSource::Csv { path, key_column } => format!(
                "CSV file `{path}`, clients keyed by {}",
                key_column
                    .as_deref()
                    .map(|k| format!("`{k}`"))
                    .unwrap_or_else(|| "(no key)".into())
            ),
        },
    );
    let mut s = String::from("| column | kind | allowed values | sensitive |\n|---|---|---|---|\n");
    for c in &schema.columns {
        let kind = match c.kind {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
        };
        let values = match &c.allowed_values {
            Some(set) => set.iter().map(i64::to_string).collect::<Vec<_>>().join(" "),
            None => "any".into(),
        };
        let sens = if schema.is_sensitive(&c.name) { "yes" } else { "no" };
        let _ = writeln!(s, "| {} | {kind} | {values} | {sens} |", c.name);
    }
    let _ = write!(s, "\nLabel: `{}` (1 = positive outcome).", schema.label);
    v.insert("schema", s);
    v.insert(
        "remap",
        match remap {
            Some(r) => json(r)?,
            None => "No remapping.".into(),
        },
    );
    v.insert("partition", json(partition)?);
    v.insert(
        "split",
        format!(
            "train {} / validation {} / test {} (validation and test sizes rounded half away from zero; train takes the rest)",
            split.train, split.validation, split.test
        ),
    );
    v.insert("master_seed", master_seed.to_string());
    let mut s = String::from("| stage | seed |\n|---|---|\n");
    for (stage, seed) in seeds {
        let _ = writeln!(s, "| {stage} | {seed} |");
    }
    v.insert("seeds", s.trim_end().to_string());
    v.insert(
        "modifications",
        if modifications.is_empty() {
            "No modifications were applied.".into()
        } else {
            let mut s =
                String::from("| client | split | operation | group | fraction | eligible | affected |\n|---|---|---|---|---|---|---|\n");
            for m in modifications {
                let op = match m.modification.kind {
                    ModificationKind::Flip => "flip",
                    ModificationKind::Drop => "drop",
                };
                let mut group = format!("{}={}", m.modification.attr, m.modification.value);
                if let Some(sec) = &m.modification.secondary {
                    let _ = write!(group, " & {}={}", sec.attr, sec.value);
                }
                let _ = writeln!(
                    s,
                    "| {} | {} | {op} | {group} | {} | {} | {} |",
                    m.client,
                    m.split.as_str(),
                    m.modification.fraction,
                    m.eligible,
                    m.affected
                );
            }
            s.trim_end().to_string()
        },
    );
    v.insert(
        "threshold_rule",
        match threshold_rule {
            Some(r) => format!(
                "A client is biased toward a target when every model ({}) puts its maximum {} DD on that target and the smallest of those maxima exceeds {}. Drop fractions tried: 0 to {} in steps of {}. Attributes: {}.",
                r.models.join(", "),
                r.level.as_str(),
                r.threshold,
                r.max_fraction,
                r.step,
                r.attrs.join(", ")
            ),
            None => "No threshold search was run.".into(),
        },
    );
    v.insert(
        "threshold_outcomes",
        if threshold_outcomes.is_empty() {
            String::new()
        } else {
            let mut s = String::from("| client | biased toward | drop fraction | met |\n|---|---|---|---|\n");
            for o in threshold_outcomes {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} |",
                    o.client,
                    o.biased_toward.as_deref().unwrap_or("none"),
                    o.drop_fraction.map(|f| f.to_string()).unwrap_or_else(|| "-".into()),
                    if o.met { "yes" } else { "no" }
                );
            }
            s.trim_end().to_string()
        },
    );
    v.insert(
        "device",
        match device {
            Some(d) => format!(
                "Each client was cut into {} IID parts; parts satisfying the bias rule were kept.\n\n- Kept: {}\n- Rejected: {}\n- Training clients: {}\n- Testing clients ({}): {}",
                d.parts_per_client,
                ids(&d.kept),
                ids(&d.rejected),
                ids(&d.train_clients),
                d.test_client_fraction,
                ids(&d.test_clients)
            ),
            None => "Not a cross-device federation.".into(),
        },
    );
    v.insert(
        "notes",
        if notes.is_empty() {
            "None.".into()
        } else {
            notes.iter().map(|n| format!("- {n}")).collect::<Vec<_>>().join("\n")
        },
    );
    Ok(v)
}

fn extra_values(extras: &DatasheetExtras) -> Result<BTreeMap<&'static str, String>> {
    let mut v = BTreeMap::new();
    v.insert(
        "fl_config",
        match &extras.fl {
            Some(c) => format!("Federated training:\n\n{}", json(c)?),
            None => "No federated training configured.".into(),
        },
    );
    v.insert(
        "fair_config",
        match &extras.fair {
            Some(c) => format!(
                "Fairness regularization on `{}` with lambda {} and target DD {}.",
                c.target_attr, c.lambda, c.target_dd
            ),
            None => "No fairness regularization configured.".into(),
        },
    );
    v.insert(
        "fairness_summary",
        match extras.fairness.first() {
            None => "No fairness summary was computed.".into(),
            Some((_, first)) => {
                let attrs: Vec<&str> = first.attributes.iter().map(|a| a.attr.as_str()).collect();
                let mut s = format!(
                    "Maximum {} per client ({}):\n\n| client |",
                    first.metric.as_str(),
                    first.level.as_str()
                );
                for a in &attrs {
                    let _ = write!(s, " {a} |");
                }
                s.push_str(" max attribute |\n|---|");
                s.push_str(&"---|".repeat(attrs.len() + 1));
                s.push('\n');
                for (id, r) in &extras.fairness {
                    let _ = write!(s, "| {id} |");
                    for a in &attrs {
                        let _ = write!(s, " {} |", opt(r.max_of(a)));
                    }
                    let _ = writeln!(s, " {} |", r.max_attribute.as_deref().unwrap_or("none"));
                }
                s.trim_end().to_string()
            }
        },
    );
    v.insert(
        "pipeline_config",
        match &extras.pipeline_config {
            Some(c) => code_block(c),
            None => "Not recorded.".into(),
        },
    );
    Ok(v)
}

/// Substitutes every `{{key}}` in `template`.
pub fn render_template(template: &str, values: &BTreeMap<&'static str, String>) -> Result<String> {
    let mut out = String::with_capacity(template.len() * 2);
    let mut used = BTreeSet::new();
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| Error::Template("unterminated placeholder".into()))?;
        let key = after[..end].trim();
        let value = values
            .get(key)
            .ok_or_else(|| Error::Template(format!("unknown template key `{key}`")))?;
        out.push_str(value);
        used.insert(key.to_string());
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    let unused: Vec<&str> = values.keys().filter(|k| !used.contains(**k)).copied().collect();
    if !unused.is_empty() {
        return Err(Error::Template(format!("template never uses {}", unused.join(", "))));
    }
    Ok(out)
}

pub fn generate_datasheet(record: &GenerationRecord, extras: &DatasheetExtras) -> Result<String> {
    let mut values = record_values(record)?;
    values.extend(extra_values(extras)?);
    render_template(DATASHEET_TEMPLATE, &values)
}
