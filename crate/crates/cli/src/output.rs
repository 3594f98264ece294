use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use moira::data::{sha256_file, sha256_hex, write_dataset, FileRef, MaskedDataset, SelectionParams};
use moira::Result;
use serde::{Deserialize, Serialize};

pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const RUN_FORMAT: &str = "moira-run/1";

/// Provenance of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: String,
    pub command: String,
    pub tool_version: String,
    /// The config after defaults and flag overrides.
    pub config: serde_json::Value,
    /// Input files by name and content hash.
    pub inputs: Vec<FileRef>,
    pub seeds: Vec<u64>,
    /// Outputs relative to the output directory.
    pub outputs: Vec<FileRef>,
    /// Hash of this manifest's JSON with `created_unix` left out.
    pub content_sha256: String,
    /// Seconds since the Unix epoch; not covered by `content_sha256`.
    pub created_unix: u64,
}

impl RunManifest {
    pub fn content_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("created_unix");
            obj.remove("content_sha256");
        }
        sha256_hex(v.to_string().as_bytes())
    }
}

pub fn input_ref(path: &Path) -> Result<FileRef> {
    Ok(FileRef {
        path: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: sha256_file(path)?,
    })
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    Ok((serde_json::to_string_pretty(value)? + "\n").into_bytes())
}

enum Artifact {
    File(String, Vec<u8>),
    Dataset(String, MaskedDataset, SelectionParams),
}

/// Artifacts collected in memory and written together once the command
/// has finished computing.
pub struct Outputs {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        }
    }

    pub fn file(&mut self, rel: impl Into<String>, bytes: Vec<u8>) {
        self.artifacts.push(Artifact::File(rel.into(), bytes));
    }

    pub fn json<T: Serialize>(&mut self, rel: impl Into<String>, value: &T) -> Result<()> {
        let bytes = to_json(value)?;
        self.file(rel, bytes);
        Ok(())
    }

    /// A dataset directory (per-modality CSVs, labels and `dataset.json`).
    pub fn dataset(&mut self, rel_dir: impl Into<String>, ds: MaskedDataset, selection: SelectionParams) {
        self.artifacts.push(Artifact::Dataset(rel_dir.into(), ds, selection));
    }

    /// Writes every artifact, then the run manifest listing them.
    pub fn commit(self, mut manifest: RunManifest) -> Result<RunManifest> {
        std::fs::create_dir_all(&self.dir)?;
        let mut written = Vec::new();
        for a in self.artifacts {
            match a {
                Artifact::File(rel, bytes) => {
                    let path = self.dir.join(&rel);
                    if let Some(parent) = path.parent() {
                        std::fs::create_dir_all(parent)?;
                    }
                    std::fs::write(&path, &bytes)?;
                    written.push(FileRef {
                        path: rel,
                        sha256: sha256_hex(&bytes),
                    });
                }
                Artifact::Dataset(rel, ds, selection) => {
                    let dir = self.dir.join(&rel);
                    let dm = write_dataset(&ds, &dir, selection)?;
                    let join = |p: &str| if rel.is_empty() { p.to_string() } else { format!("{rel}/{p}") };
                    for f in dm.modalities.iter().map(|m| &m.file).chain([&dm.labels]) {
                        written.push(FileRef {
                            path: join(&f.path),
                            sha256: f.sha256.clone(),
                        });
                    }
                    written.push(FileRef {
                        path: join("dataset.json"),
                        sha256: sha256_file(&dir.join("dataset.json"))?,
                    });
                }
            }
        }
        manifest.outputs = written;
        manifest.content_sha256 = manifest.content_hash();
        manifest.created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        std::fs::write(self.dir.join(RUN_MANIFEST), to_json(&manifest)?)?;
        Ok(manifest)
    }
}
