//! Climate-matching similarity, scenario deltas and the cluster-reinforced
//! environmental kernel.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::climate::{env_distance, FeatureVector};
use crate::clustering::{ClusterLabeling, NOISE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    pub eta: f64,
    pub beta: f64,
    pub clamp: bool,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            eta: 1.0,
            beta: 0.5,
            clamp: true,
        }
    }
}

impl KernelParams {
    pub fn new(eta: f64, beta: f64, clamp: bool) -> Result<Self> {
        let p = Self { eta, beta, clamp };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Domain(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Domain(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }
}

/// A square matrix over a fixed port order.
#[derive(Debug, Clone, PartialEq)]
pub struct PortMatrix {
    pub ports: Vec<String>,
    pub values: Array2<f64>,
}

impl PortMatrix {
    pub fn new(ports: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let n = ports.len();
        if values.dim() != (n, n) {
            return Err(Error::Dimension {
                expected: n,
                got: values.nrows(),
            });
        }
        Ok(Self { ports, values })
    }

    pub fn len(&self) -> usize {
        self.ports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ports.is_empty()
    }

    pub fn index_of(&self, port_id: &str) -> Result<usize> {
        self.ports
            .iter()
            .position(|p| p == port_id)
            .ok_or_else(|| Error::Alignment(format!("port {port_id} not in matrix")))
    }

    pub fn get(&self, from: &str, to: &str) -> Result<f64> {
        Ok(self.values[[self.index_of(from)?, self.index_of(to)?]])
    }

    pub fn check_aligned(&self, other: &PortMatrix) -> Result<()> {
        if self.ports != other.ports {
            return Err(Error::Alignment("matrices use different port orders".into()));
        }
        Ok(())
    }
}

pub type SimilarityMatrix = PortMatrix;
pub type KernelMatrix = PortMatrix;

pub fn similarity(d: f64) -> Result<f64> {
    if d.is_nan() || d < 0.0 {
        return Err(Error::Domain(format!("distance must be >= 0, got {d}")));
    }
    Ok(1.0 / (1.0 + d))
}

pub fn similarity_matrix(features: &[FeatureVector]) -> Result<SimilarityMatrix> {
    if features.is_empty() {
        return Err(Error::EmptyDataset("feature vectors"));
    }
    let n = features.len();
    let mut values = Array2::from_elem((n, n), 1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = similarity(env_distance(&features[i].values, &features[j].values)?)?;
            values[[i, j]] = s;
            values[[j, i]] = s;
        }
    }
    PortMatrix::new(features.iter().map(|f| f.port_id.clone()).collect(), values)
}

/// Elementwise `scenario - base`.
pub fn delta_similarity(base: &SimilarityMatrix, scenario: &SimilarityMatrix) -> Result<PortMatrix> {
    base.check_aligned(scenario)?;
    PortMatrix::new(base.ports.clone(), &scenario.values - &base.values)
}

/// `kappa_ij = S_ij^eta * (1 + beta [same non-noise cluster])`, optionally
/// clamped to at most 1.
pub fn kernel(s: &SimilarityMatrix, labels: &ClusterLabeling, params: &KernelParams) -> Result<KernelMatrix> {
    params.validate()?;
    let map = labels.as_map();
    let port_labels = s
        .ports
        .iter()
        .map(|p| {
            map.get(p)
                .copied()
                .ok_or_else(|| Error::Alignment(format!("port {p} has no cluster label")))
        })
        .collect::<Result<Vec<i64>>>()?;
    let values = Array2::from_shape_fn(s.values.dim(), |(i, j)| {
        let same = port_labels[i] == port_labels[j] && port_labels[i] != NOISE;
        let bonus = if same { 1.0 + params.beta } else { 1.0 };
        let k = s.values[[i, j]].powf(params.eta) * bonus;
        if params.clamp {
            k.min(1.0)
        } else {
            k
        }
    });
    PortMatrix::new(s.ports.clone(), values)
}
