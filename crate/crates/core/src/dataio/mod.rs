//! Datasets: loading, the FDCM binary container, standardization,
//! stratified splitting, and a seeded synthetic generator.

mod fdcm;
mod synth;
mod tabular;

pub use fdcm::{decode_matrix, encode_matrix, is_fdcm, load_matrix, write_matrix};
pub use synth::{make_biased_blobs, BlobSpec};
pub use tabular::{
    load_any_matrix, load_csv, read_csv, read_index_column, read_numeric_csv, write_csv,
    write_numeric_csv, CsvSchema,
};

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairsolve::GroupMembership;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// Free-form description of where the data came from.
    pub provenance: String,
    /// `N x D`.
    pub features: Array2<f64>,
    pub feature_names: Vec<String>,
    pub membership: Option<GroupMembership>,
    /// Original protected-attribute values, indexed by group id.
    pub group_names: Vec<String>,
    pub labels: Option<Vec<usize>>,
    /// Original class values, indexed by class id.
    pub label_names: Vec<String>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn group_name(&self, g: usize) -> String {
        self.group_names
            .get(g)
            .cloned()
            .unwrap_or_else(|| g.to_string())
    }

    pub fn label_name(&self, c: usize) -> String {
        self.label_names
            .get(c)
            .cloned()
            .unwrap_or_else(|| c.to_string())
    }

    /// Schema matching the column names [`write_csv`] emits.
    pub fn csv_schema(&self) -> CsvSchema {
        let features = if self.feature_names.len() == self.d() {
            self.feature_names.clone()
        } else {
            (0..self.d()).map(|j| format!("x{}", j + 1)).collect()
        };
        CsvSchema {
            features,
            psv: "psv".into(),
            label: self.labels.as_ref().map(|_| "label".into()),
        }
    }

    /// Rows in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            provenance: self.provenance.clone(),
            features: self.features.select(Axis(0), indices),
            feature_names: self.feature_names.clone(),
            membership: self.membership.as_ref().map(|m| m.subset(indices)),
            group_names: self.group_names.clone(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            label_names: self.label_names.clone(),
        }
    }

    /// Checks that every feature is finite and the side vectors have N rows.
    pub fn validate(&self) -> Result<()> {
        if let Some((idx, v)) = self.features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite feature {v} at row {}, column {}",
                idx.0 + 1,
                idx.1 + 1
            )));
        }
        if self.membership.as_ref().is_some_and(|m| m.n() != self.n()) {
            return Err(Error::Domain(
                "membership length differs from the number of rows".into(),
            ));
        }
        if self.labels.as_ref().is_some_and(|l| l.len() != self.n()) {
            return Err(Error::Domain(
                "label length differs from the number of rows".into(),
            ));
        }
        Ok(())
    }
}

/// Per-column affine map learned by [`standardize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Population standard deviation (divides by N).
    pub std: Vec<f64>,
    /// Columns with zero variance; these pass through untouched.
    pub constant: Vec<bool>,
}

impl Scaler {
    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::Config(format!(
                "scaler fitted on {} columns, input has {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            if !self.constant[j] {
                let (m, s) = (self.mean[j], self.std[j]);
                col.mapv_inplace(|v| (v - m) / s);
            }
        }
        Ok(out)
    }
}

/// Zero mean, unit population variance per column.
pub fn standardize(features: ArrayView2<f64>) -> Result<(Array2<f64>, Scaler)> {
    if features.nrows() < 2 {
        return Err(Error::Domain(
            "standardization needs at least two rows".into(),
        ));
    }
    let mean: Array1<f64> = features.mean_axis(Axis(0)).expect("non-empty");
    let std = features.std_axis(Axis(0), 0.0);
    let constant: Vec<bool> = std
        .iter()
        .zip(&mean)
        .map(|(&s, &m)| s <= 1e-12 * m.abs().max(1.0))
        .collect();
    let scaler = Scaler {
        mean: mean.to_vec(),
        std: std.to_vec(),
        constant,
    };
    Ok((scaler.apply(features)?, scaler))
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// False when some stratum was too small and a plain shuffle was used.
    pub stratified: bool,
}

/// Seeded train/test split stratified by the joint (label, group) key.
///
/// The test set has `round(N * test_fraction)` rows, apportioned to strata
/// by largest remainder. If any stratum has fewer than two rows the split
/// falls back to an unstratified shuffle.
pub fn split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = data.n();
    let n_test = (n as f64 * test_fraction).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut strata: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let label = data.labels.as_ref().map_or(0, |l| l[i]);
        let group = data.membership.as_ref().map_or(0, |m| m.group(i));
        strata.entry((label, group)).or_default().push(i);
    }
    let stratified = strata.values().all(|s| s.len() >= 2);
    let mut test = Vec::with_capacity(n_test);
    if stratified {
        let mut quotas: Vec<(usize, f64)> = strata
            .values()
            .map(|s| {
                let exact = s.len() as f64 * test_fraction;
                (exact.floor() as usize, exact - exact.floor())
            })
            .collect();
        let assigned: usize = quotas.iter().map(|q| q.0).sum();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| quotas[b].1.total_cmp(&quotas[a].1).then(a.cmp(&b)));
        for &s in order.iter().take(n_test.saturating_sub(assigned)) {
            quotas[s].0 += 1;
        }
        for (members, (q, _)) in strata.into_values().zip(quotas) {
            let mut members = members;
            members.shuffle(&mut rng);
            test.extend_from_slice(&members[..q]);
        }
    } else {
        log::warn!(
            "a (label, group) stratum has fewer than 2 rows; splitting without stratification"
        );
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        test.extend_from_slice(&all[..n_test]);
    }
    test.sort_unstable();
    let mut in_test = vec![false; n];
    for &i in &test {
        in_test[i] = true;
    }
    let train: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
    Ok(Split {
        train: data.subset(&train),
        test: data.subset(&test),
        train_indices: train,
        test_indices: test,
        stratified,
    })
}
