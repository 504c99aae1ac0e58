use std::fs;
use std::io::Write;
use std::path::Path;

use fairdc::dataio::load_any_matrix;
use fairdc::tensornet::{Dense, ModelParams};
use fairdc::{Error, GroupMembership, HardAssignment, Result, SoftAssignment};
use ndarray::Array2;
use serde::Deserialize;

/// `id,cluster` rows with 1-based ids and clusters.
pub fn write_labels(path: &Path, labels: &HardAssignment) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "id,cluster")?;
    for (i, &l) in labels.labels().iter().enumerate() {
        writeln!(f, "{},{}", i + 1, l + 1)?;
    }
    f.flush()?;
    Ok(())
}

pub fn write_model(path: &Path, params: &ModelParams) -> Result<()> {
    let text = serde_json::to_string(params).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    layers: Vec<Dense>,
}

/// Loads a model dump and re-checks its layer shapes.
pub fn read_model(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(e.to_string()).context(path.display().to_string()))?;
    ModelParams::new(file.layers).map_err(|e| e.context(path.display().to_string()))
}

pub fn read_soft(path: &Path) -> Result<SoftAssignment> {
    SoftAssignment::new(load_any_matrix(path)?).map_err(|e| e.context(path.display().to_string()))
}

fn is_one_hot(m: &Array2<f64>) -> bool {
    m.ncols() >= 2
        && m.rows().into_iter().all(|r| {
            r.iter().all(|&v| v == 0.0 || v == 1.0) && r.sum() == 1.0
        })
}

/// Integer ids from the last column. Ids starting at 1 are shifted to 0.
fn read_ids(path: &Path, m: &Array2<f64>) -> Result<(Vec<usize>, usize)> {
    let Some(col) = m.columns().into_iter().last() else {
        return Err(Error::Parse(format!("{}: no columns", path.display())));
    };
    let mut ids = Vec::with_capacity(col.len());
    for (r, &v) in col.iter().enumerate() {
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::Parse(format!(
                "{}: row {}: {v} is not a non-negative integer id",
                path.display(),
                r + 1
            )));
        }
        ids.push(v as usize);
    }
    let shift = usize::from(ids.iter().all(|&v| v >= 1));
    let ids: Vec<usize> = ids.into_iter().map(|v| v - shift).collect();
    let count = ids.iter().max().map_or(0, |&m| m + 1);
    Ok((ids, count))
}

/// Group ids (one per row, or the last of several columns) or a one-hot matrix.
pub fn read_membership(path: &Path) -> Result<GroupMembership> {
    let m = load_any_matrix(path)?;
    let parsed = if is_one_hot(&m) {
        GroupMembership::from_one_hot(m.view())
    } else {
        let (ids, t) = read_ids(path, &m)?;
        GroupMembership::new(ids, t)
    };
    parsed.map_err(|e| e.context(path.display().to_string()))
}

/// Cluster or class ids, as written by `write_labels` or a bare column.
pub fn read_labels(path: &Path) -> Result<(Vec<usize>, usize)> {
    let m = load_any_matrix(path)?;
    read_ids(path, &m)
}

pub fn read_features(path: &Path) -> Result<Array2<f64>> {
    load_any_matrix(path)
}
