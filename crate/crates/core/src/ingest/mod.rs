//! Getting data in and out: ACS-style CSV, value remapping, default ACS
//! schemas, the seeded synthetic federation generator and on-disk
//! federations (`metadata.json` plus one CSV per client per split).

mod csv_io;
mod remap;
mod schemas;
mod synthetic;

pub use csv_io::{
    load_csv, read_federation, write_csv, write_federation, write_metadata, LabelRule, LabelSource, CLIENTS_DIR,
    METADATA_FILE, ROW_ID_COLUMN,
};
pub use remap::{apply_remap, ColumnRemap, RemapConfig};
pub use schemas::{acs_employment, acs_income, BaseTask};
pub use synthetic::{
    generate_synthetic, generate_synthetic_pools, ClientProfile, GroupProfile, SyntheticAttribute, SyntheticSpec,
};
