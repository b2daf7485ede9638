//! Fixtures shared by the benchmarks.

use fedfair::ingest::{generate_synthetic, SyntheticSpec};
use fedfair::FederatedDataset;

/// `clients` clients of `rows` rows each, SEX-biased labels.
pub fn federation(clients: usize, rows: usize) -> FederatedDataset {
    generate_synthetic(&SyntheticSpec::two_group("SEX", clients, rows, [0.65, 0.35], 1)).expect("valid synthetic spec")
}
