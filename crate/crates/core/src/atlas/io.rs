use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AtlasEntry, DgpSpec, DiscoveryOutcome};
use crate::error::{AuditError, Result};
use crate::graph::SummaryGraph;
use crate::risk::PerDimension;
use crate::series::TimeSeriesMatrix;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SERIES_FILE: &str = "series.json";
pub const TRUTH_FILE: &str = "truth_graph.json";
pub const SPEC_FILE: &str = "spec.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub family: String,
    pub dir: String,
    pub seed: u64,
    pub n: usize,
    pub t: usize,
    pub spectral_radius: f64,
    pub missing_fraction: f64,
    pub latent_children: Vec<Vec<usize>>,
    pub severity: PerDimension<f64>,
    pub labels: PerDimension<bool>,
    pub discovery: DiscoveryOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub master_seed: Option<u64>,
    pub total: usize,
    pub per_family: BTreeMap<String, usize>,
    pub n_composition: BTreeMap<usize, usize>,
    pub t_composition: BTreeMap<usize, usize>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn build(entries: &[AtlasEntry], master_seed: Option<u64>) -> Self {
        let mut per_family = BTreeMap::new();
        let mut n_composition = BTreeMap::new();
        let mut t_composition = BTreeMap::new();
        for e in entries {
            *per_family.entry(e.spec.family.to_string()).or_insert(0) += 1;
            *n_composition.entry(e.spec.n).or_insert(0) += 1;
            *t_composition.entry(e.spec.t).or_insert(0) += 1;
        }
        Manifest {
            master_seed,
            total: entries.len(),
            per_family,
            n_composition,
            t_composition,
            entries: entries
                .iter()
                .map(|e| ManifestEntry {
                    id: e.id.clone(),
                    family: e.spec.family.to_string(),
                    dir: e.id.clone(),
                    seed: e.spec.seed,
                    n: e.spec.n,
                    t: e.spec.t,
                    spectral_radius: e.spectral_radius,
                    missing_fraction: e.data.missing_fraction(),
                    latent_children: e.latent_children.clone(),
                    severity: e.severity.clone(),
                    labels: e.labels.clone(),
                    discovery: e.discovery.clone(),
                })
                .collect(),
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

/// Write the atlas below `dir`: one directory per entry plus `manifest.json`.
pub fn write_atlas(dir: &Path, entries: &[AtlasEntry], master_seed: Option<u64>) -> Result<()> {
    fs::create_dir_all(dir)?;
    for e in entries {
        let sub = dir.join(&e.id);
        fs::create_dir_all(&sub)?;
        write_file(&sub.join(SERIES_FILE), &e.data.to_json_string()?)?;
        write_file(&sub.join(TRUTH_FILE), &e.truth.to_json_string()?)?;
        write_file(&sub.join(SPEC_FILE), &serde_json::to_string_pretty(&e.spec)?)?;
    }
    let manifest = Manifest::build(entries, master_seed);
    write_file(&dir.join(MANIFEST_FILE), &serde_json::to_string_pretty(&manifest)?)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    serde_json::from_str(&text).map_err(|e| AuditError::Parse(format!("manifest: {e}")))
}

/// Load every entry listed in the manifest.
pub fn read_atlas(dir: &Path) -> Result<Vec<AtlasEntry>> {
    let manifest = read_manifest(dir)?;
    manifest
        .entries
        .into_iter()
        .map(|m| {
            let sub = dir.join(&m.dir);
            let data = TimeSeriesMatrix::from_json_str(&fs::read_to_string(sub.join(SERIES_FILE))?)?;
            let truth = SummaryGraph::from_json_str(&fs::read_to_string(sub.join(TRUTH_FILE))?)?;
            let spec: DgpSpec = serde_json::from_str(&fs::read_to_string(sub.join(SPEC_FILE))?)
                .map_err(|e| AuditError::Parse(format!("{}: {e}", m.id)))?;
            Ok(AtlasEntry {
                id: m.id,
                spec,
                data,
                truth,
                spectral_radius: m.spectral_radius,
                latent_children: m.latent_children,
                severity: m.severity,
                labels: m.labels,
                discovery: m.discovery,
            })
        })
        .collect()
}
