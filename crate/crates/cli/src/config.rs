//! Declarative pipeline configuration (JSON). Every section is validated
//! before any command touches the file system.

use std::path::{Path, PathBuf};

use fedfair::bias::Modification;
use fedfair::fl::{FLConfig, FairRegConfig};
use fedfair::ingest::{BaseTask, LabelSource, RemapConfig, SyntheticSpec};
use fedfair::models::{TrainConfig, TreeConfig};
use fedfair::recipes::{DeviceConfig, ThresholdSearch};
use fedfair::rng::derive_seed;
use fedfair::{Level, Metric, PartitionConfig, Schema, SplitFractions, TrainerSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    Synthetic(SyntheticSpec),
    Csv {
        path: PathBuf,
        /// Schema and label rule of a known task; overridden by `schema`
        /// and `label` when given.
        #[serde(default)]
        base_task: Option<BaseTask>,
        #[serde(default)]
        schema: Option<Schema>,
        #[serde(default)]
        label: Option<LabelSource>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairnessConfig {
    pub metric: Metric,
    pub level: Level,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        FairnessConfig {
            metric: Metric::Dd,
            level: Level::Attribute,
        }
    }
}

fn default_year() -> u16 {
    2018
}

fn default_horizon() -> String {
    "1-Year".into()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_local_models() -> Vec<TrainerSpec> {
    vec![
        TrainerSpec::Gbdt(TreeConfig::default()),
        TrainerSpec::Logistic(TrainConfig::default()),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Federation read by `evaluate` and `simulate`; defaults to `output_dir`.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    pub source: SourceConfig,
    #[serde(default = "default_year")]
    pub year: u16,
    #[serde(default = "default_horizon")]
    pub horizon: String,
    #[serde(default)]
    pub states: Vec<String>,
    #[serde(default)]
    pub remap: Option<RemapConfig>,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub split: SplitFractions,
    pub sensitive_attrs: Vec<String>,
    #[serde(default)]
    pub fairness: FairnessConfig,
    #[serde(default)]
    pub modifications: Vec<Modification>,
    #[serde(default)]
    pub threshold_search: Option<ThresholdSearch>,
    #[serde(default)]
    pub device: Option<DeviceConfig>,
    /// Local models for `evaluate`; the first is the local reference in
    /// `simulate`.
    #[serde(default = "default_local_models")]
    pub local_models: Vec<TrainerSpec>,
    #[serde(default)]
    pub fl: Option<FLConfig>,
    #[serde(default)]
    pub fair: Option<FairRegConfig>,
    #[serde(default)]
    pub notes: Vec<String>,
}

fn field<T>(name: &str, r: fedfair::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Config(format!("{name}: {e}")))
}

fn seed_trainer(t: &mut TrainerSpec, seed: u64) {
    match t {
        TrainerSpec::Logistic(c) => c.seed = seed,
        TrainerSpec::Gbdt(c) => c.seed = seed,
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Ok((Self::parse(&text)?, text))
    }

    pub fn data_dir(&self) -> &Path {
        self.data_dir.as_deref().unwrap_or(&self.output_dir)
    }

    /// Schema the federation will have (after remapping), when it can be
    /// known without reading data.
    fn source_schema(&self) -> Option<Schema> {
        match &self.source {
            SourceConfig::Synthetic(spec) => Some(spec.schema()),
            SourceConfig::Csv { base_task, schema, .. } => schema.clone().or_else(|| base_task.map(BaseTask::schema)),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match &self.source {
            SourceConfig::Synthetic(spec) => field("source.synthetic", spec.validate())?,
            SourceConfig::Csv {
                base_task,
                schema,
                label,
                ..
            } => {
                if schema.is_none() && base_task.is_none() {
                    return Err(CliError::Config("source.csv: give base_task or schema".into()));
                }
                if label.is_none() && base_task.is_none() {
                    return Err(CliError::Config("source.csv: give base_task or label".into()));
                }
                if let Some(s) = schema {
                    if let Some(v) = s.violations().first() {
                        return Err(CliError::Config(format!("source.csv.schema: {}", v.message)));
                    }
                }
            }
        }
        field("split", self.split.validate())?;
        if let Some(sub) = &self.partition.sub_partitioner {
            field("partition.sub_partitioner", sub.validate())?;
        }
        if self.sensitive_attrs.is_empty() {
            return Err(CliError::Config(
                "sensitive_attrs: at least one attribute is required".into(),
            ));
        }
        if let Some(schema) = self.source_schema() {
            for a in &self.sensitive_attrs {
                for part in a.split('*') {
                    let known = schema.column(part).is_some()
                        || self.remap.as_ref().is_some_and(|r| r.columns.contains_key(part));
                    if !known || !schema.is_sensitive(part) {
                        return Err(CliError::Config(format!(
                            "sensitive_attrs: {part} is not a sensitive column of the source schema"
                        )));
                    }
                }
            }
        }
        for (i, m) in self.modifications.iter().enumerate() {
            field(&format!("modifications[{i}]"), m.validate())?;
            if let Some(schema) = self.source_schema() {
                if !schema.is_sensitive(&m.attr) {
                    return Err(CliError::Config(format!(
                        "modifications[{i}].attr: {} is not sensitive",
                        m.attr
                    )));
                }
            }
        }
        if let Some(s) = &self.threshold_search {
            field("threshold_search", s.validate())?;
        }
        if let Some(d) = &self.device {
            field("device", d.validate())?;
            if self.threshold_search.is_none() {
                return Err(CliError::Config(
                    "device: needs threshold_search for the sampling rule".into(),
                ));
            }
        }
        if self.local_models.is_empty() {
            return Err(CliError::Config("local_models: at least one model is required".into()));
        }
        for (i, t) in self.local_models.iter().enumerate() {
            field(&format!("local_models[{i}]"), t.validate())?;
        }
        if let Some(fl) = &self.fl {
            field("fl", fl.validate())?;
        }
        if let Some(f) = &self.fair {
            field("fair", f.validate())?;
            if self.fl.is_none() {
                return Err(CliError::Config("fair: needs an fl section".into()));
            }
            if !self.sensitive_attrs.contains(&f.target_attr) {
                return Err(CliError::Config(format!(
                    "fair.target_attr: {} is not in sensitive_attrs",
                    f.target_attr
                )));
            }
        }
        Ok(())
    }

    /// Replaces every component seed with one derived from the master seed.
    pub fn derive_seeds(&mut self) {
        let master = self.seed;
        if let SourceConfig::Synthetic(spec) = &mut self.source {
            spec.seed = derive_seed(master, "synthetic");
        }
        self.partition.seed = derive_seed(master, "partition");
        for (i, m) in self.modifications.iter_mut().enumerate() {
            m.seed = derive_seed(master, &format!("modification/{i}"));
        }
        if let Some(s) = &mut self.threshold_search {
            for (i, t) in s.trainers.iter_mut().enumerate() {
                seed_trainer(t, derive_seed(master, &format!("search/trainer/{i}")));
            }
        }
        for (i, t) in self.local_models.iter_mut().enumerate() {
            seed_trainer(t, derive_seed(master, &format!("local/{i}")));
        }
        if let Some(fl) = &mut self.fl {
            fl.seed = derive_seed(master, "fl");
        }
    }
}
