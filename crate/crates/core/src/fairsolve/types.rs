use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-stochastic `N x K` matrix of cluster membership probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftAssignment(Array2<f64>);

/// Rows must sum to one within this tolerance.
const ROW_SUM_TOL: f64 = 1e-6;

impl SoftAssignment {
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        if probs.ncols() == 0 {
            return Err(Error::Domain(
                "soft assignment needs at least one cluster".into(),
            ));
        }
        for (i, row) in probs.rows().into_iter().enumerate() {
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::Domain(format!(
                    "row {i} has invalid probability {v}"
                )));
            }
            let sum = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Domain(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(Self(probs))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Domain("rows have different lengths".into()));
        }
        let flat = rows.iter().flatten().copied().collect();
        let m = Array2::from_shape_vec((rows.len(), k), flat)
            .map_err(|e| Error::Domain(e.to_string()))?;
        Self::new(m)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[[i, j]]
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// One cluster index in `0..k` per instance (zero-based).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl HardAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some((i, l)) = labels.iter().enumerate().find(|(_, l)| **l >= k) {
            return Err(Error::Domain(format!(
                "instance {i} has cluster {l}, but k = {k}"
            )));
        }
        Ok(Self { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn one_hot(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.labels.len(), self.k));
        for (i, &l) in self.labels.iter().enumerate() {
            m[[i, l]] = 1.0;
        }
        m
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            k: self.k,
        }
    }
}

/// Protected-group membership: every instance belongs to exactly one of `T` groups.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupMembership {
    groups: Vec<usize>,
    sizes: Vec<usize>,
}

impl GroupMembership {
    pub fn new(groups: Vec<usize>, t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::Domain("membership needs at least one group".into()));
        }
        let mut sizes = vec![0; t];
        for (i, &g) in groups.iter().enumerate() {
            if g >= t {
                return Err(Error::Domain(format!(
                    "instance {i} has group {g}, but T = {t}"
                )));
            }
            sizes[g] += 1;
        }
        Ok(Self { groups, sizes })
    }

    /// From an `N x T` indicator matrix with exactly one 1 per row.
    pub fn from_one_hot(m: ArrayView2<f64>) -> Result<Self> {
        let mut groups = Vec::with_capacity(m.nrows());
        for (i, row) in m.rows().into_iter().enumerate() {
            let ones: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|(_, v)| **v == 1.0)
                .map(|(t, _)| t)
                .collect();
            let zeros = row.iter().filter(|v| **v == 0.0).count();
            if ones.len() != 1 || zeros + 1 != row.len() {
                return Err(Error::Domain(format!("membership row {i} is not one-hot")));
            }
            groups.push(ones[0]);
        }
        Self::new(groups, m.ncols())
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> usize {
        self.groups[i]
    }

    pub fn n(&self) -> usize {
        self.groups.len()
    }

    pub fn t(&self) -> usize {
        self.sizes.len()
    }

    /// `|G_t|` for each group.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// `rho_t = |G_t| / N`.
    pub fn proportions(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.sizes.iter().map(|&s| s as f64 / n).collect()
    }

    pub fn one_hot(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n(), self.t()));
        for (i, &g) in self.groups.iter().enumerate() {
            m[[i, g]] = 1.0;
        }
        m
    }

    /// Best attainable overall balance, `|G_min| / |G_max|`.
    pub fn optimal_balance(&self) -> f64 {
        let min = *self.sizes.iter().min().unwrap();
        let max = *self.sizes.iter().max().unwrap();
        if max == 0 {
            0.0
        } else {
            min as f64 / max as f64
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let groups = indices.iter().map(|&i| self.groups[i]).collect();
        Self::new(groups, self.t()).expect("subset of a valid membership")
    }
}
