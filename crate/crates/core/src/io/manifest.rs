//! Run manifests: what produced a set of output files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::report::ExperimentReport;
use crate::error::{Error, Result};

/// Version string recorded in every manifest.
pub const TOOL_VERSION: &str = concat!("smpnn ", env!("CARGO_PKG_VERSION"));

/// Everything needed to reproduce an output: the command, the resolved
/// configuration, the seed and a fingerprint of the input data. Two
/// manifests that agree on all fields except `timestamp_unix` describe
/// identical outputs, wall-time columns aside.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    /// `sha256:` of the input files, or of the generator description.
    pub dataset_fingerprint: String,
    pub timestamp_unix: u64,
    pub tool_version: String,
    /// File names, relative to the manifest, that this manifest covers.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(
        command: impl Into<String>,
        config: BTreeMap<String, String>,
        seed: u64,
        dataset_fingerprint: impl Into<String>,
    ) -> Self {
        Self {
            command: command.into(),
            config,
            seed,
            dataset_fingerprint: dataset_fingerprint.into(),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            tool_version: TOOL_VERSION.to_string(),
            outputs: Vec::new(),
        }
    }

    /// Equality ignoring the timestamp.
    pub fn same_run(&self, other: &RunManifest) -> bool {
        RunManifest {
            timestamp_unix: 0,
            ..self.clone()
        } == RunManifest {
            timestamp_unix: 0,
            ..other.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest fields always serialize")
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

/// `sha256:<hex>` of a text, used for generated datasets.
pub fn fingerprint_text(text: &str) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(text.as_bytes())))
}

/// `sha256:<hex>` over the files in order; each contributes its length and
/// bytes so that moving bytes between files changes the digest.
pub fn fingerprint_files(paths: &[&Path]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = fs::read(p).map_err(|e| Error::io(*p, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(format!("sha256:{}", hex::encode(h.finalize())))
}

/// Writes `<name>.csv`, `<name>.series.csv` when the report has series, and
/// one `<name>.manifest.json` covering them. Returns the written paths.
pub fn write_report_with_manifest(
    report: &ExperimentReport,
    dir: impl AsRef<Path>,
    manifest: &RunManifest,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = manifest.clone();
    let mut written = Vec::new();
    let csv = format!("{}.csv", report.name);
    report.write_csv(dir.join(&csv))?;
    manifest.outputs.push(csv);
    written.push(dir.join(&manifest.outputs[0]));
    if !report.series.is_empty() {
        let series = format!("{}.series.csv", report.name);
        let path = dir.join(&series);
        fs::write(&path, report.series_csv()).map_err(|e| Error::io(&path, e))?;
        manifest.outputs.push(series);
        written.push(path);
    }
    for (k, v) in &report.notes {
        manifest
            .config
            .entry(format!("note.{k}"))
            .or_insert_with(|| v.clone());
    }
    let mpath = dir.join(format!("{}.manifest.json", report.name));
    manifest.write(&mpath)?;
    written.push(mpath);
    Ok(written)
}
