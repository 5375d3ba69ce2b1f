//! File formats, reports, run manifests, configuration files, and the
//! scaling benchmark.

mod bench;
mod config;
mod formats;
mod manifest;
mod report;

pub use bench::{estimated_bytes, gcn_sublayer_counted, linear_fit, scale_bench, BenchConfig};
pub use config::{KvFile, ResolvedConfig, Source};
pub use formats::{
    format_edges, format_features, format_labels, format_node_ids, load_dataset, parse_edges,
    parse_features, parse_labels, parse_node_ids, read_edges, read_features, read_labels,
    read_node_ids, save_dataset, DatasetPaths,
};
pub use manifest::{
    fingerprint_files, fingerprint_text, write_report_with_manifest, RunManifest, TOOL_VERSION,
};
pub use report::{mean_std, Cell, ExperimentReport};
