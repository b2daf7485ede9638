//! Federated fairness benchmarking: tabular data, client partitioning,
//! group fairness metrics, bias exacerbation, local models, federated
//! training and the reports that compare them.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bias;
pub mod error;
pub mod fairness;
pub mod federation;
pub mod fl;
pub mod ingest;
pub mod models;
pub mod partition;
pub mod recipes;
pub mod report;
pub mod rng;
pub mod tabular;

pub use bias::{AppliedModification, Modification, ModificationKind};
pub use error::{Error, Result};
pub use fairness::{bias_label, fairness_table, BiasTarget, FairnessReport, Granularity, Level, Metric, Predictions};
pub use federation::{DataSource, FederatedDataset, GenerationRecord};
pub use fl::{FLConfig, FairRegConfig, RoundHistory};
pub use models::{LinearModel, Model, TrainerSpec};
pub use partition::{PartitionConfig, SplitFractions, SubPartitioner};
pub use tabular::{ClientId, ColumnData, ColumnKind, ColumnSchema, Dataset, Schema, SplitName, SplitSet};
