//! File formats: datasets, run configuration, stored chains and exported
//! prediction surfaces.

pub mod chain;
pub mod config;
pub mod dataset;
pub mod export;

pub use chain::{load_chain, load_run, write_chain, write_run, Run, RunManifest};
pub use config::{parse_config, parse_config_str, parse_simulation_str, SimulationConfig};
pub use dataset::{load_dataset, read_dataset, read_locations, write_dataset, write_dataset_to};
pub use export::{export_prediction, export_prediction_to, ExportFormat, GridSpec, LonLatProjection};
