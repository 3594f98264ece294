//! Ingestion, alignment, feature selection, scaling, splitting and
//! synthetic generation of multi-modality datasets.

mod anova;
mod dataset;
mod manifest;
mod split;
mod standardize;
mod synth;
mod table;

pub use anova::{anova_f, select_features, select_top_k, FeatureSelection};
pub use dataset::{align, AlignReport, MaskedDataset, Modality};
pub use manifest::{
    load_dataset, read_manifest, sha256_file, sha256_hex, verify_manifest, write_dataset, DatasetManifest, FileRef,
    ModalityFile, SelectionParams, DATASET_FORMAT, DEFAULT_TOP_K,
};
pub use split::split;
pub use standardize::{standardize_apply, standardize_fit, StandardizeStats};
pub use synth::{synthesize, SynthConfig, SynthModality};
pub use table::{load_csv, load_labels, write_labels, OmicsTable};
