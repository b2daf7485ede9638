//! Subcommand implementations. Every command computes its results in
//! memory first and writes files only at the end.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fedfair::bias::apply_modifications;
use fedfair::fairness::{bias_label, fairness_table, BiasTarget, FairnessReport, Granularity, Level, Predictions};
use fedfair::federation::{DataSource, GenerationRecord};
use fedfair::fl::{
    evaluate_global, evaluate_on, run_fair_fedavg, run_fedavg, ClientEvaluation, EvalMode, RoundHistory,
};
use fedfair::ingest::{
    apply_remap, generate_synthetic, load_csv, read_federation, write_federation, CLIENTS_DIR, METADATA_FILE,
};
use fedfair::models::{predict, Model};
use fedfair::partition::build_clients;
use fedfair::recipes::{device_federation, exacerbate_federation};
use fedfair::report::{
    bar_chart, compare, generate_datasheet, render_svg, BarGroup, ComparisonReport, DatasheetExtras, SvgKind,
};
use fedfair::rng::derive_seed;
use fedfair::{ClientId, FederatedDataset, LinearModel, SplitSet};
use serde::Serialize;

use crate::config::{PipelineConfig, SourceConfig};
use crate::CliError;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| CliError::Output {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Runtime(e.into()))
}

fn remap_federation(fed: FederatedDataset, cfg: &PipelineConfig) -> fedfair::Result<FederatedDataset> {
    let Some(remap) = &cfg.remap else { return Ok(fed) };
    let mut clients = BTreeMap::new();
    for (id, s) in fed.clients {
        let split = SplitSet::new(
            apply_remap(&s.train, remap)?,
            apply_remap(&s.validation, remap)?,
            apply_remap(&s.test, remap)?,
        )?;
        clients.insert(id, split);
    }
    let mut record = fed.record;
    if let Some(s) = clients.values().next() {
        record.schema = (**s.schema()).clone();
    }
    FederatedDataset::new(clients, record)
}

/// Clients whose key, or parent key for sub-clients, is listed.
fn select_states(fed: &FederatedDataset, states: &[String], sub_clients: bool) -> Result<FederatedDataset, CliError> {
    let key = |id: &ClientId| -> String {
        let s = id.as_str();
        if sub_clients {
            s.rsplit_once('_').map_or(s, |(p, _)| p).to_string()
        } else {
            s.to_string()
        }
    };
    let ids = fed.client_ids();
    if let Some(missing) = states.iter().find(|st| !ids.iter().any(|id| key(id) == **st)) {
        return Err(CliError::Data(fedfair::Error::Ingest {
            location: "states".into(),
            message: format!("no client with key {missing}"),
        }));
    }
    let keep: Vec<ClientId> = ids.into_iter().filter(|id| states.contains(&key(id))).collect();
    Ok(fed.subset(&keep)?)
}

/// Source, remap, partition, states, modifications, threshold search and device
/// construction, in that order.
pub fn build_federation(cfg: &PipelineConfig) -> Result<FederatedDataset, CliError> {
    let mut fed = match &cfg.source {
        SourceConfig::Synthetic(spec) => {
            let fed = generate_synthetic(spec)?;
            let mut fed = remap_federation(fed, cfg)?;
            fed.record.seeds.insert("synthetic".into(), spec.seed);
            fed
        }
        SourceConfig::Csv {
            path,
            base_task,
            schema,
            label,
        } => {
            let schema = schema
                .clone()
                .or_else(|| base_task.map(|t| t.schema()))
                .expect("validated");
            let label = label
                .clone()
                .or_else(|| base_task.map(|t| t.label_source()))
                .expect("validated");
            let mut pooled = load_csv(path, &schema, &label)?;
            if let Some(remap) = &cfg.remap {
                pooled = apply_remap(&pooled, remap)?;
            }
            let clients = build_clients(&pooled, &cfg.partition, cfg.split)?;
            let record = GenerationRecord::new(
                base_task.map(|t| t.name()).unwrap_or("custom"),
                DataSource::Csv {
                    path: path.display().to_string(),
                    key_column: cfg.partition.natural_key.clone(),
                },
                (**pooled.schema()).clone(),
                cfg.seed,
            );
            FederatedDataset::new(clients, record)?
        }
    };
    if !cfg.states.is_empty() {
        fed = select_states(&fed, &cfg.states, cfg.partition.sub_partitioner.is_some())?;
    }
    let r = &mut fed.record;
    r.year = cfg.year;
    r.horizon = cfg.horizon.clone();
    r.states = cfg.states.clone();
    r.remap = cfg.remap.clone();
    r.partition = cfg.partition.clone();
    r.split = cfg.split;
    r.master_seed = cfg.seed;
    r.seeds.insert("partition".into(), cfg.partition.seed);
    r.notes = cfg.notes.clone();
    for (i, m) in cfg.modifications.iter().enumerate() {
        r.seeds.insert(format!("modification/{i}"), m.seed);
    }
    if !cfg.modifications.is_empty() {
        fed = apply_modifications(&fed, &cfg.modifications)?;
    }
    if let Some(search) = &cfg.threshold_search {
        fed = exacerbate_federation(&fed, search, derive_seed(cfg.seed, "threshold_search"))?;
    }
    if let (Some(device), Some(search)) = (&cfg.device, &cfg.threshold_search) {
        fed = device_federation(&fed, device, search, derive_seed(cfg.seed, "device"))?;
    }
    Ok(fed)
}

#[derive(Debug, Clone, Serialize)]
struct ClientTable<'a> {
    client: &'a ClientId,
    report: &'a FairnessReport,
}

#[derive(Debug, Clone, Serialize)]
struct TableFile<'a> {
    source: &'a str,
    clients: Vec<ClientTable<'a>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    skipped: Vec<ClientId>,
}

fn table_json(
    source: &str,
    reports: &[(ClientId, FairnessReport)],
    skipped: Vec<ClientId>,
) -> Result<String, CliError> {
    to_json(&TableFile {
        source,
        clients: reports
            .iter()
            .map(|(client, report)| ClientTable { client, report })
            .collect(),
        skipped,
    })
}

fn table_csv(reports: &[(ClientId, FairnessReport)]) -> String {
    let mut out = format!("client,{}\n", FairnessReport::CSV_HEADER.join(","));
    for (id, r) in reports {
        for row in r.csv_rows() {
            let _ = writeln!(out, "{id},{}", row.join(","));
        }
    }
    out
}

fn table_svg(title: &str, attrs: &[String], reports: &[(ClientId, FairnessReport)]) -> String {
    let groups: Vec<BarGroup> = reports
        .iter()
        .map(|(id, r)| BarGroup {
            label: id.to_string(),
            values: attrs.iter().map(|a| r.max_of(a)).collect(),
        })
        .collect();
    bar_chart(title, attrs, &groups)
}

fn true_label_reports(
    fed: &FederatedDataset,
    cfg: &PipelineConfig,
) -> fedfair::Result<Vec<(ClientId, FairnessReport)>> {
    fed.clients
        .iter()
        .map(|(id, s)| {
            fairness_table(
                &s.union(),
                Predictions::TrueLabels,
                &cfg.sensitive_attrs,
                cfg.fairness.metric,
                cfg.fairness.level,
            )
            .map(|r| (id.clone(), r))
        })
        .collect()
}

fn datasheet_text(fed: &FederatedDataset, cfg: &PipelineConfig, text: &str) -> Result<String, CliError> {
    let extras = DatasheetExtras {
        fl: cfg.fl.clone(),
        fair: cfg.fair.clone(),
        fairness: true_label_reports(fed, cfg)?,
        pipeline_config: Some(text.to_string()),
    };
    Ok(generate_datasheet(&fed.record, &extras)?)
}

/// Builds the federation and writes data, metadata, true-label fairness
/// tables, a bar chart and the datasheet under the output directory.
pub fn cmd_generate(cfg: &PipelineConfig, text: &str) -> Result<(), CliError> {
    let fed = build_federation(cfg)?;
    let truth = true_label_reports(&fed, cfg)?;
    let datasheet = datasheet_text(&fed, cfg, text)?;
    let out = &cfg.output_dir;
    // Clear clients of an earlier run so the tree reflects this one only.
    let old = out.join(CLIENTS_DIR);
    if out.join(METADATA_FILE).exists() && old.exists() {
        fs::remove_dir_all(&old).map_err(|source| CliError::Output {
            path: old.clone(),
            source,
        })?;
    }
    write_federation(&fed, out).map_err(CliError::Runtime)?;
    write(
        &out.join("fairness_true_labels.json"),
        table_json("true_labels", &truth, vec![])?,
    )?;
    write(&out.join("fairness_true_labels.csv"), table_csv(&truth))?;
    write(
        &out.join("fairness_true_labels.svg"),
        table_svg("True-label maximum disparity per client", &cfg.sensitive_attrs, &truth),
    )?;
    write(&out.join("datasheet.md"), datasheet)?;
    log::info!("wrote {} clients to {}", fed.len(), out.display());
    Ok(())
}

/// Rewrites `datasheet.md` from the federation stored in the data
/// directory.
pub fn cmd_datasheet(cfg: &PipelineConfig, text: &str) -> Result<(), CliError> {
    let fed = read_federation(cfg.data_dir())?;
    let doc = datasheet_text(&fed, cfg, text)?;
    write(&cfg.output_dir.join("datasheet.md"), doc)
}

fn granularity(level: Level) -> Granularity {
    match level {
        Level::Attribute => Granularity::Attribute,
        Level::Value | Level::AttributeValue => Granularity::Value,
    }
}

/// True-label and per-local-model fairness tables for every client, plus
/// the benchmark label when at least two models are configured.
pub fn cmd_evaluate(cfg: &PipelineConfig, _text: &str) -> Result<(), CliError> {
    let fed = read_federation(cfg.data_dir())?;
    let attrs = &cfg.sensitive_attrs;
    let truth = true_label_reports(&fed, cfg)?;
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    let dir = cfg.output_dir.join("evaluation");
    files.push((dir.join("true_labels.json"), table_json("true_labels", &truth, vec![])?));
    files.push((dir.join("true_labels.csv"), table_csv(&truth)));
    files.push((dir.join("true_labels.svg"), table_svg("True labels", attrs, &truth)));

    let mut per_model: Vec<BTreeMap<ClientId, FairnessReport>> = Vec::new();
    for (i, trainer) in cfg.local_models.iter().enumerate() {
        let name = format!("{}_{i}", trainer.id());
        let mut reports = Vec::new();
        let mut skipped = Vec::new();
        for (id, split) in &fed.clients {
            let model = match trainer.fit(split) {
                Ok(m) => m,
                Err(fedfair::Error::Training(msg)) => {
                    log::warn!("{name} on {id}: {msg}");
                    skipped.push(id.clone());
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let pred = predict(&model, &split.test)?;
            let report = fairness_table(
                &split.test,
                Predictions::Model {
                    id: &name,
                    preds: &pred.labels,
                },
                attrs,
                cfg.fairness.metric,
                cfg.fairness.level,
            )?;
            reports.push((id.clone(), report));
        }
        files.push((dir.join(format!("{name}.json")), table_json(&name, &reports, skipped)?));
        files.push((dir.join(format!("{name}.csv")), table_csv(&reports)));
        files.push((dir.join(format!("{name}.svg")), table_svg(&name, attrs, &reports)));
        per_model.push(reports.into_iter().collect());
    }

    if per_model.len() >= 2 {
        let threshold = cfg.threshold_search.as_ref().map_or(0.09, |s| s.rule.threshold);
        let mut labels: BTreeMap<ClientId, Option<String>> = BTreeMap::new();
        for id in fed.client_ids() {
            let reports: Option<Vec<FairnessReport>> = per_model.iter().map(|m| m.get(&id).cloned()).collect();
            let label = match reports {
                Some(r) => bias_label(&r, threshold, granularity(cfg.fairness.level))?.map(|t| t.to_string()),
                None => None,
            };
            labels.insert(id, label);
        }
        files.push((dir.join("labels.json"), to_json(&labels)?));
    }
    for (path, contents) in files {
        write(&path, contents)?;
    }
    Ok(())
}

fn recorded_labels(fed: &FederatedDataset, ids: &[ClientId]) -> BTreeMap<ClientId, Option<BiasTarget>> {
    let parse = |s: &str| match s.split_once('=') {
        Some((attr, v)) => v.parse().ok().map(|value| BiasTarget::Value {
            attr: attr.to_string(),
            value,
        }),
        None => Some(BiasTarget::Attribute { attr: s.to_string() }),
    };
    let by_client: BTreeMap<&str, &str> = fed
        .record
        .threshold_outcomes
        .iter()
        .filter(|o| o.met)
        .filter_map(|o| o.biased_toward.as_deref().map(|t| (o.client.as_str(), t)))
        .collect();
    ids.iter()
        .map(|id| {
            let own = by_client.get(id.as_str());
            let parent = id.as_str().rsplit_once('_').and_then(|(p, _)| by_client.get(p));
            (id.clone(), own.or(parent).and_then(|t| parse(t)))
        })
        .collect()
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    mode: &'a EvalMode,
    local_model: &'a str,
    skipped: &'a [ClientId],
    fedavg: &'a ComparisonReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    fair: Option<&'a ComparisonReport>,
}

/// FedAvg and, when configured, the fairness-regularized arm; each global
/// model is compared with per-client local models.
pub fn cmd_simulate(cfg: &PipelineConfig, _text: &str) -> Result<(), CliError> {
    let fl = cfg
        .fl
        .as_ref()
        .ok_or_else(|| CliError::Config("fl: simulate needs an fl section".into()))?;
    let fed = read_federation(cfg.data_dir())?;
    let attrs = &cfg.sensitive_attrs;
    let level = cfg.fairness.level;
    let (train_fed, mode) = match &fed.record.device {
        Some(d) => (
            fed.subset(&d.train_clients)?,
            EvalMode::CrossDevice {
                test_clients: d.test_clients.clone(),
            },
        ),
        None => (fed.clone(), EvalMode::CrossSilo),
    };
    let eval_ids: Vec<ClientId> = match &mode {
        EvalMode::CrossSilo => fed.client_ids(),
        EvalMode::CrossDevice { test_clients } => test_clients.clone(),
    };

    let trainer = &cfg.local_models[0];
    let mut local = Vec::new();
    let mut skipped = Vec::new();
    for id in &eval_ids {
        let split = fed.get(id)?;
        let eval_rows = match mode {
            EvalMode::CrossSilo => split.test.clone(),
            EvalMode::CrossDevice { .. } => split.union(),
        };
        match trainer.fit(split) {
            Ok(model) => local.push(evaluate_on(&model, trainer.id(), id, &eval_rows, attrs, level)?),
            Err(fedfair::Error::Training(msg)) => {
                log::warn!("local {} on {id}: {msg}", trainer.id());
                skipped.push(id.clone());
            }
            Err(e) => return Err(e.into()),
        }
    }
    let labels = recorded_labels(&fed, &eval_ids);
    let keep = |evals: Vec<ClientEvaluation>| -> Vec<ClientEvaluation> {
        evals.into_iter().filter(|e| !skipped.contains(&e.client)).collect()
    };

    let mut files: Vec<(PathBuf, String)> = Vec::new();
    let dir = cfg.output_dir.join("simulation");
    let mut arm = |name: &str, model: LinearModel, history: RoundHistory| -> Result<ComparisonReport, CliError> {
        let global = keep(evaluate_global(
            &Model::Logistic(model.clone()),
            &fed,
            &mode,
            attrs,
            level,
        )?);
        let report = compare(&local, &global, &labels)?;
        files.push((dir.join(format!("history_{name}.csv")), history.to_csv()));
        files.push((dir.join(format!("history_{name}.json")), history.to_json()?));
        files.push((dir.join(format!("model_{name}.json")), to_json(&model)?));
        for (kind, file) in [
            (SvgKind::Scatter, "scatter"),
            (SvgKind::Bars, "bars"),
            (SvgKind::ValueShift, "value_shift"),
        ] {
            files.push((dir.join(format!("{file}_{name}.svg")), render_svg(&report, kind)));
        }
        Ok(report)
    };
    let (model, history) = run_fedavg(&train_fed, fl)?;
    let fedavg = arm("fedavg", model, history)?;
    let fair = match &cfg.fair {
        Some(f) => {
            let (model, history) = run_fair_fedavg(&train_fed, fl, f)?;
            Some(arm("fair", model, history)?)
        }
        None => None,
    };
    let mut csv = format!("arm,{}\n", ComparisonReport::CSV_HEADER);
    for (name, r) in [("fedavg", Some(&fedavg)), ("fair", fair.as_ref())] {
        let Some(r) = r else { continue };
        for line in r.to_csv().lines().skip(1) {
            let _ = writeln!(csv, "{name},{line}");
        }
    }
    files.push((dir.join("report.csv"), csv));
    files.push((
        dir.join("report.json"),
        to_json(&SimulationReport {
            mode: &mode,
            local_model: trainer.id(),
            skipped: &skipped,
            fedavg: &fedavg,
            fair: fair.as_ref(),
        })?,
    ));
    for (path, contents) in files {
        write(&path, contents)?;
    }
    Ok(())
}
