//! Edge feature assembly and the supervised link-prediction dataset.

mod logistic;

pub use logistic::{
    ensemble, evaluate, loss_and_gradient, predict, train_logistic, EnsembleWeights, LogisticModel, Metrics,
    ModelDocument, TrainParams, MODEL_FORMAT_VERSION,
};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterLabeling;
use crate::error::{Error, Result};
use crate::io::{csv_reader, parse_f64};
use crate::mobility::{edge_history, Timeline, DEFAULT_RECENCY_HORIZON};
use crate::registry::PortRegistry;
use crate::similarity::{PortMatrix, SimilarityMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Flag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub names: Vec<String>,
    pub kinds: Vec<FeatureKind>,
}

impl FeatureLayout {
    /// `lag_1..lag_L, recency, S, dS, same_cluster, cluster_i_1..K,
    /// cluster_j_1..K, capacity_i, capacity_j`, then for each exogenous
    /// covariate `exo_i_<name>` and `exo_j_<name>`, then `exo_missing`.
    pub fn new(lags: usize, clusters: usize, exo_names: &[String]) -> Self {
        let mut layout = Self {
            names: Vec::new(),
            kinds: Vec::new(),
        };
        for k in 1..=lags {
            layout.push(format!("lag_{k}"), FeatureKind::Continuous);
        }
        layout.push("recency".into(), FeatureKind::Continuous);
        layout.push("similarity".into(), FeatureKind::Continuous);
        layout.push("delta_similarity".into(), FeatureKind::Continuous);
        layout.push("same_cluster".into(), FeatureKind::Flag);
        for side in ["i", "j"] {
            for c in 1..=clusters {
                layout.push(format!("cluster_{side}_{c}"), FeatureKind::Flag);
            }
        }
        layout.push("capacity_i".into(), FeatureKind::Continuous);
        layout.push("capacity_j".into(), FeatureKind::Continuous);
        if !exo_names.is_empty() {
            for side in ["i", "j"] {
                for name in exo_names {
                    layout.push(format!("exo_{side}_{name}"), FeatureKind::Continuous);
                }
            }
            layout.push("exo_missing".into(), FeatureKind::Flag);
        }
        layout
    }

    fn push(&mut self, name: String, kind: FeatureKind) {
        self.names.push(name);
        self.kinds.push(kind);
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Exogenous covariates keyed by `(port_id, month_index, name)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExoTable {
    values: BTreeMap<(String, i64, String), f64>,
    names: BTreeSet<String>,
}

impl ExoTable {
    pub fn insert(&mut self, port_id: &str, month_index: i64, name: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::MalformedSeries(format!(
                "covariate {name} for {port_id} at {month_index} is not finite"
            )));
        }
        let key = (port_id.to_string(), month_index, name.to_string());
        if self.values.insert(key, value).is_some() {
            return Err(Error::DataIntegrity(format!(
                "duplicate covariate {name} for {port_id} at month {month_index}"
            )));
        }
        self.names.insert(name.to_string());
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.names.iter().cloned().collect()
    }

    pub fn get(&self, port_id: &str, month_index: i64, name: &str) -> Option<f64> {
        self.values
            .get(&(port_id.to_string(), month_index, name.to_string()))
            .copied()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Reads `port_id,month_index,name,value`.
    pub fn load(path: &Path, registry: &PortRegistry) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            port_id: String,
            month_index: i64,
            name: String,
            value: String,
        }
        let mut table = Self::default();
        let mut rdr = csv_reader(path)?;
        for (line, row) in rdr.deserialize::<Row>().enumerate() {
            let line = line as u64 + 2;
            let row = row.map_err(|e| Error::from(e).at(path, line))?;
            let parsed = registry
                .index_of(&row.port_id)
                .and_then(|_| parse_f64(&row.value))
                .and_then(|v| table.insert(&row.port_id, row.month_index, &row.name, v));
            parsed.map_err(|e| e.at(path, line))?;
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    /// Lag depth `L`.
    pub lags: usize,
    /// Forecast horizon `Δ` in months.
    pub horizon: usize,
    /// Label threshold on the voyage count.
    pub tau: f64,
    /// Never-active pairs sampled per active pair.
    pub negative_ratio: f64,
    pub recency_horizon: u32,
    pub seed: u64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            lags: 3,
            horizon: 1,
            tau: 0.0,
            negative_ratio: 3.0,
            recency_horizon: DEFAULT_RECENCY_HORIZON,
            seed: 0,
        }
    }
}

impl DatasetParams {
    pub fn validate(&self) -> Result<()> {
        if self.lags == 0 {
            return Err(Error::Domain("lags must be >= 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Domain("horizon must be >= 1".into()));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::Domain(format!("tau must be >= 0, got {}", self.tau)));
        }
        if !(self.negative_ratio.is_finite() && self.negative_ratio >= 0.0) {
            return Err(Error::Domain(format!(
                "negative_ratio must be >= 0, got {}",
                self.negative_ratio
            )));
        }
        if self.recency_horizon == 0 {
            return Err(Error::Domain("recency_horizon must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSample {
    pub pair: (usize, usize),
    pub month: i64,
    pub target_month: i64,
    pub features: Vec<f64>,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ports: Vec<String>,
    pub layout: FeatureLayout,
    pub pairs: Vec<(usize, usize)>,
    pub samples: Vec<EdgeSample>,
}

/// Builds raw (unstandardized) edge feature vectors over a fixed context.
pub struct EdgeFeatureBuilder<'a> {
    timeline: &'a Timeline,
    similarity: &'a SimilarityMatrix,
    delta: &'a PortMatrix,
    clusters: Vec<i64>,
    num_clusters: usize,
    capacities: Vec<f64>,
    exo: Option<&'a ExoTable>,
    exo_names: Vec<String>,
    params: DatasetParams,
    pub layout: FeatureLayout,
}

impl<'a> EdgeFeatureBuilder<'a> {
    pub fn new(
        timeline: &'a Timeline,
        similarity: &'a SimilarityMatrix,
        delta: &'a PortMatrix,
        labels: &ClusterLabeling,
        registry: &PortRegistry,
        exo: Option<&'a ExoTable>,
        params: DatasetParams,
    ) -> Result<Self> {
        params.validate()?;
        let ports: &[String] = &timeline.ports;
        if similarity.ports != ports || delta.ports != ports {
            return Err(Error::Alignment(
                "similarity matrices and timeline use different port orders".into(),
            ));
        }
        if registry.ids() != ports {
            return Err(Error::Alignment("registry and timeline disagree on ports".into()));
        }
        let clusters = ports
            .iter()
            .map(|p| {
                labels
                    .label_of(p)
                    .ok_or_else(|| Error::Alignment(format!("port {p} has no cluster label")))
            })
            .collect::<Result<Vec<_>>>()?;
        let capacities = registry.ports().iter().map(|p| p.capacity).collect();
        let exo = exo.filter(|t| !t.is_empty());
        let exo_names = exo.map(|t| t.names()).unwrap_or_default();
        let layout = FeatureLayout::new(params.lags, labels.num_clusters(), &exo_names);
        Ok(Self {
            timeline,
            similarity,
            delta,
            clusters,
            num_clusters: labels.num_clusters(),
            capacities,
            exo,
            exo_names,
            params,
            layout,
        })
    }

    /// Months `t` with a full lag window inside the timeline.
    pub fn feature_months(&self) -> Result<(i64, i64)> {
        let (first, last) = self
            .timeline
            .first_month()
            .zip(self.timeline.last_month())
            .ok_or_else(|| Error::Range("empty timeline".into()))?;
        let start = first + self.params.lags as i64 - 1;
        if start > last {
            return Err(Error::Range(format!(
                "timeline of {} months is shorter than {} lags",
                last - first + 1,
                self.params.lags
            )));
        }
        Ok((start, last))
    }

    /// Months `t` whose target `t + Δ` is observed.
    pub fn labeled_months(&self) -> Result<(i64, i64)> {
        let (start, last) = self.feature_months()?;
        let end = last - self.params.horizon as i64;
        if end < start {
            return Err(Error::Range(format!(
                "horizon {} leaves no labeled months (lag window ends at {start}, data at {last})",
                self.params.horizon
            )));
        }
        Ok((start, end))
    }

    /// Raw feature vector; missing covariates are NaN.
    pub fn features(&self, pair: (usize, usize), t: i64) -> Result<Vec<f64>> {
        let (i, j) = pair;
        let history = edge_history(
            self.timeline,
            pair,
            t,
            self.params.lags,
            self.params.recency_horizon,
        )?;
        let mut v = Vec::with_capacity(self.layout.len());
        v.extend(history.lags.iter().map(|&w| w as f64));
        v.push(history.recency as f64);
        v.push(self.similarity.values[[i, j]]);
        v.push(self.delta.values[[i, j]]);
        let (ci, cj) = (self.clusters[i], self.clusters[j]);
        v.push(if ci > 0 && ci == cj { 1.0 } else { 0.0 });
        for c in [ci, cj] {
            v.extend((1..=self.num_clusters as i64).map(|id| if id == c { 1.0 } else { 0.0 }));
        }
        v.push(self.capacities[i]);
        v.push(self.capacities[j]);
        if let Some(exo) = self.exo {
            let mut missing = false;
            for p in [i, j] {
                let port = &self.timeline.ports[p];
                for name in &self.exo_names {
                    match exo.get(port, t, name) {
                        Some(x) => v.push(x),
                        None => {
                            missing = true;
                            v.push(f64::NAN);
                        }
                    }
                }
            }
            v.push(if missing { 1.0 } else { 0.0 });
        }
        debug_assert_eq!(v.len(), self.layout.len());
        Ok(v)
    }

    pub fn label(&self, pair: (usize, usize), target_month: i64) -> bool {
        self.timeline.weight(pair.0, pair.1, target_month) as f64 > self.params.tau
    }
}

/// Active pairs plus a seeded sample of never-active ordered pairs.
pub fn pair_universe(timeline: &Timeline, negative_ratio: f64, seed: u64) -> Vec<(usize, usize)> {
    let active = timeline.active_pairs();
    let active_set: BTreeSet<_> = active.iter().copied().collect();
    let n = timeline.ports.len();
    let mut candidates: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && !active_set.contains(&(i, j)))
        .collect();
    let want = ((active.len() as f64 * negative_ratio).round() as usize).min(candidates.len());
    candidates.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut pairs = active;
    pairs.extend_from_slice(&candidates[..want]);
    pairs.sort_unstable();
    pairs
}

/// One sample per pair in the universe and labeled month, in `(pair, t)`
/// order. Features are raw; fit a [`FeatureScaler`] on the training split.
pub fn assemble_dataset(builder: &EdgeFeatureBuilder<'_>) -> Result<Dataset> {
    let (start, end) = builder.labeled_months()?;
    let horizon = builder.params.horizon as i64;
    let pairs = pair_universe(
        builder.timeline,
        builder.params.negative_ratio,
        builder.params.seed,
    );
    let per_pair = pairs
        .par_iter()
        .map(|&pair| {
            (start..=end)
                .map(|t| {
                    Ok(EdgeSample {
                        pair,
                        month: t,
                        target_month: t + horizon,
                        features: builder.features(pair, t)?,
                        label: builder.label(pair, t + horizon),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        ports: builder.timeline.ports.to_vec(),
        layout: builder.layout.clone(),
        pairs,
        samples: per_pair.into_iter().flatten().collect(),
    })
}

/// Splits at `eval_start`: evaluation samples have `t >= eval_start`,
/// training samples have `t + Δ < eval_start`. Samples in between are dropped.
pub fn chronological_split(samples: &[EdgeSample], eval_start: i64) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for (k, s) in samples.iter().enumerate() {
        if s.month >= eval_start {
            eval.push(k);
        } else if s.target_month < eval_start {
            train.push(k);
        }
    }
    (train, eval)
}

pub fn check_no_leakage<'a, I, J>(train: I, eval: J) -> Result<()>
where
    I: IntoIterator<Item = &'a EdgeSample>,
    J: IntoIterator<Item = &'a EdgeSample>,
{
    let last_target = train.into_iter().map(|s| s.target_month).max();
    let first_eval = eval.into_iter().map(|s| s.month).min();
    if let (Some(a), Some(b)) = (last_target, first_eval) {
        if a >= b {
            return Err(Error::Ordering(format!(
                "training target month {a} overlaps evaluation month {b}"
            )));
        }
    }
    Ok(())
}

/// Z-scores continuous dimensions with statistics from the fitting rows;
/// flags pass through. NaN entries are ignored when fitting and become 0
/// after transformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub kinds: Vec<FeatureKind>,
}

impl FeatureScaler {
    pub fn fit(layout: &FeatureLayout, rows: &[&[f64]]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset("training samples"));
        }
        let dim = layout.len();
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: r.len(),
            });
        }
        let mut mean = vec![0.0; dim];
        let mut scale = vec![1.0; dim];
        for d in 0..dim {
            if layout.kinds[d] == FeatureKind::Flag {
                continue;
            }
            let vals: Vec<f64> = rows.iter().map(|r| r[d]).filter(|x| !x.is_nan()).collect();
            if vals.is_empty() {
                continue;
            }
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            mean[d] = m;
            if var > 0.0 {
                scale[d] = var.sqrt();
            } else {
                scale[d] = 0.0;
            }
        }
        Ok(Self {
            mean,
            scale,
            kinds: layout.kinds.clone(),
        })
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.mean.len() {
            return Err(Error::Dimension {
                expected: self.mean.len(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(d, &x)| {
                if x.is_nan() {
                    0.0
                } else if self.kinds[d] == FeatureKind::Flag {
                    x
                } else if self.scale[d] == 0.0 {
                    // zero spread in training: centre only
                    x - self.mean[d]
                } else {
                    (x - self.mean[d]) / self.scale[d]
                }
            })
            .collect())
    }
}
