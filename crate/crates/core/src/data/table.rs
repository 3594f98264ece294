use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use crate::error::{MoiraError, Result};
use crate::numerics::Tensor2;

/// One modality's samples × features matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OmicsTable {
    pub modality_name: String,
    pub sample_ids: Vec<String>,
    pub feature_ids: Vec<String>,
    pub matrix: Tensor2,
}

impl OmicsTable {
    pub fn new(
        modality_name: impl Into<String>,
        sample_ids: Vec<String>,
        feature_ids: Vec<String>,
        matrix: Tensor2,
    ) -> Result<Self> {
        if matrix.shape() != (sample_ids.len(), feature_ids.len()) {
            return Err(MoiraError::dim(
                "OmicsTable::new",
                matrix.shape(),
                (sample_ids.len(), feature_ids.len()),
            ));
        }
        if let Some(d) = first_duplicate(&sample_ids) {
            return Err(MoiraError::Contract(format!("duplicate sample id `{d}`")));
        }
        if let Some(d) = first_duplicate(&feature_ids) {
            return Err(MoiraError::Contract(format!("duplicate feature id `{d}`")));
        }
        if !matrix.is_finite() {
            return Err(MoiraError::Contract("non-finite matrix entry".into()));
        }
        Ok(Self {
            modality_name: modality_name.into(),
            sample_ids,
            feature_ids,
            matrix,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["sample_id".to_string()];
        header.extend(self.feature_ids.iter().cloned());
        w.write_record(&header)?;
        for (i, id) in self.sample_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.matrix.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn first_duplicate(ids: &[String]) -> Option<&str> {
    let mut seen = HashSet::with_capacity(ids.len());
    ids.iter().find(|id| !seen.insert(id.as_str())).map(String::as_str)
}

/// Reads a table whose header is `sample_id,<feature ids...>`.
///
/// Error locations are 1-based and count the header as row 1.
pub fn load_csv(path: &Path, modality_name: &str) -> Result<OmicsTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => {
            return Err(MoiraError::Parse {
                row: 1,
                col: 1,
                msg: "empty file".into(),
            })
        }
    };
    if header.get(0).map(str::trim) != Some("sample_id") {
        return Err(MoiraError::Parse {
            row: 1,
            col: 1,
            msg: "header must start with `sample_id`".into(),
        });
    }
    let feature_ids: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    if let Some(d) = first_duplicate(&feature_ids) {
        let col = feature_ids.iter().position(|f| f == d).unwrap_or(0) + 2;
        return Err(MoiraError::Parse {
            row: 1,
            col,
            msg: format!("duplicate feature id `{d}`"),
        });
    }

    let mut sample_ids = Vec::new();
    let mut seen = HashSet::new();
    let mut values = Vec::new();
    for (k, rec) in records.enumerate() {
        let rec = rec?;
        let row = k + 2;
        if rec.len() != feature_ids.len() + 1 {
            return Err(MoiraError::Parse {
                row,
                col: rec.len().min(feature_ids.len() + 1),
                msg: format!("expected {} cells, found {}", feature_ids.len() + 1, rec.len()),
            });
        }
        let id = rec[0].trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(MoiraError::Parse {
                row,
                col: 1,
                msg: format!("duplicate sample id `{id}`"),
            });
        }
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| MoiraError::Parse {
                row,
                col: j + 2,
                msg: format!("non-numeric cell `{cell}`"),
            })?;
            if !v.is_finite() {
                return Err(MoiraError::Parse {
                    row,
                    col: j + 2,
                    msg: format!("non-finite cell `{cell}`"),
                });
            }
            values.push(v);
        }
        sample_ids.push(id);
    }
    let matrix = Tensor2::new(sample_ids.len(), feature_ids.len(), values)?;
    OmicsTable::new(modality_name, sample_ids, feature_ids, matrix)
}

/// Reads `sample_id,label` rows; labels are non-negative integers.
pub fn load_labels(path: &Path) -> Result<BTreeMap<String, usize>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut out = BTreeMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        if row == 1 {
            let ok = rec.len() == 2 && &rec[0] == "sample_id" && &rec[1] == "label";
            if !ok {
                return Err(MoiraError::Parse {
                    row,
                    col: 1,
                    msg: "header must be `sample_id,label`".into(),
                });
            }
            continue;
        }
        if rec.len() != 2 {
            return Err(MoiraError::Parse {
                row,
                col: rec.len(),
                msg: "expected 2 cells".into(),
            });
        }
        let label: usize = rec[1].trim().parse().map_err(|_| MoiraError::Parse {
            row,
            col: 2,
            msg: format!("label `{}` is not a non-negative integer", &rec[1]),
        })?;
        let id = rec[0].trim().to_string();
        if out.insert(id.clone(), label).is_some() {
            return Err(MoiraError::Parse {
                row,
                col: 1,
                msg: format!("duplicate sample id `{id}`"),
            });
        }
    }
    Ok(out)
}

pub fn write_labels(path: &Path, ids: &[String], labels: &[usize]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "sample_id,label")?;
    for (id, l) in ids.iter().zip(labels) {
        writeln!(f, "{id},{l}")?;
    }
    f.flush()?;
    Ok(())
}
