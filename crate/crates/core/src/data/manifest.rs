use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{align, MaskedDataset};
use super::table::{load_csv, load_labels, write_labels};
use crate::error::{MoiraError, Result};

pub const DATASET_FORMAT: &str = "moira-dataset/1";
pub const DEFAULT_TOP_K: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    /// Relative to the manifest's directory unless absolute.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityFile {
    pub name: String,
    #[serde(flatten)]
    pub file: FileRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub top_k: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self { top_k: DEFAULT_TOP_K }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: String,
    pub modalities: Vec<ModalityFile>,
    pub labels: FileRef,
    #[serde(default)]
    pub selection: SelectionParams,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Writes one CSV per modality (present samples only), `labels.csv`, and
/// `dataset.json` into `dir`.
pub fn write_dataset(ds: &MaskedDataset, dir: &Path, selection: SelectionParams) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir)?;
    let mut modalities = Vec::new();
    for table in ds.to_tables() {
        let file = format!("{}.csv", table.modality_name);
        let path = dir.join(&file);
        table.write_csv(&path)?;
        modalities.push(ModalityFile {
            name: table.modality_name.clone(),
            file: FileRef {
                path: file,
                sha256: sha256_file(&path)?,
            },
        });
    }
    let labels_path = dir.join("labels.csv");
    write_labels(&labels_path, &ds.sample_ids, &ds.labels)?;
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT.into(),
        modalities,
        labels: FileRef {
            path: "labels.csv".into(),
            sha256: sha256_file(&labels_path)?,
        },
        selection,
    };
    std::fs::write(dir.join("dataset.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| MoiraError::Integrity(format!("cannot read manifest {}: {e}", path.display())))?;
    let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| MoiraError::config("manifest", e.to_string()))?;
    if m.format_version != DATASET_FORMAT {
        return Err(MoiraError::config(
            "format_version",
            format!("expected `{DATASET_FORMAT}`, found `{}`", m.format_version),
        ));
    }
    Ok(m)
}

/// Checks every referenced file exists and matches its recorded hash.
pub fn verify_manifest(manifest: &DatasetManifest, base: &Path) -> Result<()> {
    let files = manifest
        .modalities
        .iter()
        .map(|m| &m.file)
        .chain(std::iter::once(&manifest.labels));
    for f in files {
        let path = resolve(base, &f.path);
        let actual = sha256_file(&path)
            .map_err(|e| MoiraError::Integrity(format!("cannot read {}: {e}", path.display())))?;
        if actual != f.sha256 {
            return Err(MoiraError::Integrity(format!(
                "hash mismatch for {}: manifest {}, file {actual}",
                path.display(),
                f.sha256
            )));
        }
    }
    Ok(())
}

/// Loads, verifies and aligns the dataset a manifest describes.
pub fn load_dataset(manifest_path: &Path) -> Result<(MaskedDataset, DatasetManifest)> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    verify_manifest(&manifest, base)?;
    let tables = manifest
        .modalities
        .iter()
        .map(|m| load_csv(&resolve(base, &m.file.path), &m.name))
        .collect::<Result<Vec<_>>>()?;
    let labels = load_labels(&resolve(base, &manifest.labels.path))?;
    let (ds, _) = align(&tables, &labels)?;
    Ok((ds, manifest))
}
