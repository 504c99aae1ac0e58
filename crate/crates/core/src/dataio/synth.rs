use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::fairsolve::GroupMembership;

/// Parameters of the biased-blobs generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub n_per_blob: usize,
    pub k: usize,
    pub d: usize,
    /// Probability that an instance's protected attribute equals its blob's parity.
    pub psv_bias: f64,
    /// Distance between nearest blob centers, in units of the blob standard deviation.
    #[serde(default = "default_separation")]
    pub separation: f64,
    pub seed: u64,
}

fn default_separation() -> f64 {
    8.0
}

impl BlobSpec {
    pub fn new(n_per_blob: usize, k: usize, d: usize, psv_bias: f64, seed: u64) -> Self {
        Self {
            n_per_blob,
            k,
            d,
            psv_bias,
            separation: default_separation(),
            seed,
        }
    }

    /// `K x D` blob centers with nearest-neighbour distance `separation`.
    ///
    /// With `D >= K` the centers are scaled unit vectors (a regular
    /// simplex); otherwise they form a regular polygon in the first two
    /// coordinates, or evenly spaced points on a line when `D = 1`.
    pub fn centers(&self) -> Array2<f64> {
        let (k, d, sep) = (self.k, self.d, self.separation);
        let mut c = Array2::zeros((k, d));
        if k < 2 {
            return c;
        }
        if d >= k {
            for j in 0..k {
                c[[j, j]] = sep / 2f64.sqrt();
            }
        } else if d >= 2 {
            let radius = sep / (2.0 * (PI / k as f64).sin());
            for j in 0..k {
                let angle = 2.0 * PI * j as f64 / k as f64;
                c[[j, 0]] = radius * angle.cos();
                c[[j, 1]] = radius * angle.sin();
            }
        } else {
            for j in 0..k {
                c[[j, 0]] = sep * j as f64;
            }
        }
        c
    }

    pub fn generate(&self) -> Result<Dataset> {
        if self.n_per_blob == 0 || self.k == 0 || self.d == 0 {
            return Err(Error::Config(
                "blob counts and dimension must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.psv_bias) {
            return Err(Error::Config(format!(
                "psv_bias must lie in [0, 1], got {}",
                self.psv_bias
            )));
        }
        if !(self.separation.is_finite() && self.separation > 0.0) {
            return Err(Error::Config("separation must be positive".into()));
        }
        let centers = self.centers();
        let n = self.n_per_blob * self.k;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut features = Array2::zeros((n, self.d));
        let mut groups = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for blob in 0..self.k {
            for r in 0..self.n_per_blob {
                let i = blob * self.n_per_blob + r;
                for j in 0..self.d {
                    features[[i, j]] = centers[[blob, j]] + rng.sample::<f64, _>(StandardNormal);
                }
                let parity = blob % 2;
                groups.push(if rng.random_bool(self.psv_bias) {
                    parity
                } else {
                    1 - parity
                });
                labels.push(blob);
            }
        }
        Ok(Dataset {
            name: "biased_blobs".into(),
            provenance: format!(
                "biased_blobs(n_per_blob={}, k={}, d={}, psv_bias={}, separation={}, seed={})",
                self.n_per_blob, self.k, self.d, self.psv_bias, self.separation, self.seed
            ),
            features,
            feature_names: (1..=self.d).map(|j| format!("x{j}")).collect(),
            membership: Some(GroupMembership::new(groups, 2)?),
            group_names: vec!["0".into(), "1".into()],
            labels: Some(labels),
            label_names: (0..self.k).map(|j| j.to_string()).collect(),
        })
    }
}

/// Gaussian blobs whose binary protected attribute follows blob parity
/// with probability `psv_bias`. Labels are blob ids.
pub fn make_biased_blobs(
    n_per_blob: usize,
    k: usize,
    d: usize,
    psv_bias: f64,
    seed: u64,
) -> Result<Dataset> {
    BlobSpec::new(n_per_blob, k, d, psv_bias, seed).generate()
}
