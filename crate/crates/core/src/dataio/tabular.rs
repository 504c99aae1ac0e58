use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::fdcm;
use super::Dataset;
use crate::error::{Error, Result};
use crate::fairsolve::GroupMembership;

/// Which CSV columns hold features, the protected attribute, and labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub features: Vec<String>,
    pub psv: String,
    #[serde(default)]
    pub label: Option<String>,
}

/// Assigns indices to distinct strings in first-appearance order.
#[derive(Default)]
struct Interner {
    index: HashMap<String, usize>,
    names: Vec<String>,
}

impl Interner {
    fn id(&mut self, s: &str) -> usize {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        let i = self.names.len();
        self.index.insert(s.to_owned(), i);
        self.names.push(s.to_owned());
        i
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Parse(format!("missing column {name:?}")))
}

fn parse_cell(cell: &str, row: usize, col: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| {
        Error::Parse(format!(
            "row {row}, column {col:?}: cannot parse {cell:?} as a number"
        ))
    })?;
    if !v.is_finite() {
        return Err(Error::Parse(format!(
            "row {row}, column {col:?}: non-finite value {cell:?}"
        )));
    }
    Ok(v)
}

/// Loads a tabular dataset. Rows are numbered from 1 after the header in
/// error messages.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    let name = path
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    read_csv(file, schema, &name).map_err(|e| e.context(path.display().to_string()))
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema, name: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let feat_cols = schema
        .features
        .iter()
        .map(|f| column(&headers, f))
        .collect::<Result<Vec<_>>>()?;
    if feat_cols.is_empty() {
        return Err(Error::Config("schema lists no feature columns".into()));
    }
    let psv_col = column(&headers, &schema.psv)?;
    let label_col = schema
        .label
        .as_deref()
        .map(|l| column(&headers, l))
        .transpose()?;

    let mut values = Vec::new();
    let mut groups = Interner::default();
    let mut classes = Interner::default();
    let (mut group_ids, mut label_ids) = (Vec::new(), Vec::new());
    let mut n = 0;
    for record in rdr.records() {
        let record = record?;
        n += 1;
        for (&c, fname) in feat_cols.iter().zip(&schema.features) {
            values.push(parse_cell(&record[c], n, fname)?);
        }
        group_ids.push(groups.id(record[psv_col].trim()));
        if let Some(c) = label_col {
            label_ids.push(classes.id(record[c].trim()));
        }
    }
    if groups.names.len() < 2 {
        return Err(Error::Parse(format!(
            "protected attribute {:?} has {} distinct value(s); need at least 2",
            schema.psv,
            groups.names.len()
        )));
    }
    let features =
        Array2::from_shape_vec((n, feat_cols.len()), values).expect("row lengths checked");
    let t = groups.names.len();
    Ok(Dataset {
        name: name.to_owned(),
        provenance: format!("csv:{name}"),
        features,
        feature_names: schema.features.clone(),
        membership: Some(GroupMembership::new(group_ids, t)?),
        group_names: groups.names,
        labels: label_col.map(|_| label_ids),
        label_names: classes.names,
    })
}

/// Writes a dataset in the layout [`load_csv`] reads with
/// [`Dataset::csv_schema`].
pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let schema = data.csv_schema();
    let mut header: Vec<&str> = schema.features.iter().map(String::as_str).collect();
    header.push(&schema.psv);
    if let Some(l) = &schema.label {
        header.push(l);
    }
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut row: Vec<String> = data.features.row(i).iter().map(|v| v.to_string()).collect();
        row.push(match &data.membership {
            Some(m) => data.group_name(m.group(i)),
            None => String::new(),
        });
        if let Some(labels) = &data.labels {
            row.push(data.label_name(labels[i]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a purely numeric CSV. A first row that does not parse as numbers
/// is taken as a header and skipped.
pub fn read_numeric_csv<R: Read>(reader: R) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        if r == 0 && record.iter().any(|c| c.trim().parse::<f64>().is_err()) {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {c}",
                    r + 1,
                    record.len()
                )))
            }
            _ => {}
        }
        for (c, cell) in record.iter().enumerate() {
            values.push(parse_cell(cell, r + 1, &format!("#{}", c + 1))?);
        }
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, cols.unwrap_or(0)), values).expect("row lengths checked"))
}

/// Loads a numeric matrix from either an FDCM file or a CSV file, chosen
/// by the file's leading bytes.
pub fn load_any_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let bytes =
        std::fs::read(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
    let parsed = if fdcm::is_fdcm(&bytes) {
        fdcm::decode_matrix(&bytes)
    } else {
        read_numeric_csv(bytes.as_slice())
    };
    parsed.map_err(|e| e.context(path.display().to_string()))
}

pub fn write_numeric_csv(
    path: impl AsRef<Path>,
    header: Option<&[String]>,
    m: &Array2<f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if let Some(h) = header {
        w.write_record(h)?;
    }
    for row in m.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads one integer per row (first column), e.g. cluster or group ids.
/// A non-numeric first row is skipped as a header.
pub fn read_index_column<R: Read>(reader: R) -> Result<Vec<i64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let cell = record.get(0).unwrap_or("").trim();
        match cell.parse::<i64>() {
            Ok(v) => out.push(v),
            Err(_) if r == 0 => continue,
            Err(_) => {
                return Err(Error::Parse(format!(
                    "row {}: cannot parse {cell:?} as an integer",
                    r + 1
                )))
            }
        }
    }
    Ok(out)
}
