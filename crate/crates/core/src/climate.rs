//! Monthly climate ingestion, hemisphere phase alignment and per-port
//! feature vectors.
//!
//! Each port carries one 12-month climatology per variable. Southern
//! hemisphere series are rotated by six months so that every port shares
//! the same seasonal anchor before summaries are computed. The summary for
//! one variable is six numbers, always in this order:
//!
//! | slot | feature   | definition                                         |
//! |------|-----------|----------------------------------------------------|
//! | 0    | mean      | arithmetic mean of the 12 values                   |
//! | 1    | amplitude | `2 |c1| / 12`, first DFT harmonic                  |
//! | 2    | phase     | month angle of the harmonic peak, in `[0, 2pi)`    |
//! | 3    | variance  | population variance                                |
//! | 4    | min       |                                                    |
//! | 5    | max       |                                                    |
//!
//! Variables are laid out in lexicographic order.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::csv_reader;
use crate::registry::PortRegistry;

pub const MONTHS: usize = 12;
pub const FEATURES_PER_VARIABLE: usize = 6;
pub const FEATURE_NAMES: [&str; FEATURES_PER_VARIABLE] =
    ["mean", "amplitude", "phase", "variance", "min", "max"];

pub type MonthlySeries = [f64; MONTHS];

#[derive(Debug, Clone, PartialEq)]
pub struct PortRecord {
    pub port_id: String,
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
    pub capacity: f64,
    pub series: BTreeMap<String, MonthlySeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub port_id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeasonalSummary {
    pub mean: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub variance: f64,
    pub min: f64,
    pub max: f64,
}

impl SeasonalSummary {
    pub fn to_array(self) -> [f64; FEATURES_PER_VARIABLE] {
        [
            self.mean,
            self.amplitude,
            self.phase,
            self.variance,
            self.min,
            self.max,
        ]
    }
}

/// Month shift that moves a series onto the northern seasonal anchor.
/// The equator counts as northern.
pub fn hemisphere_shift(latitude: f64) -> usize {
    if latitude < 0.0 {
        6
    } else {
        0
    }
}

/// Re-indexes a series so that month `t` lands at `(t + delta) mod 12`.
pub fn shift_months(series: &MonthlySeries, delta: usize) -> MonthlySeries {
    let mut out = [0.0; MONTHS];
    for (t, &v) in series.iter().enumerate() {
        out[(t + delta) % MONTHS] = v;
    }
    out
}

pub fn align_phase(series: &[f64], latitude: f64) -> Result<MonthlySeries> {
    let series = as_monthly(series)?;
    if !(-90.0..=90.0).contains(&latitude) {
        return Err(Error::Domain(format!("latitude {latitude} outside [-90, 90]")));
    }
    Ok(shift_months(&series, hemisphere_shift(latitude)))
}

fn as_monthly(series: &[f64]) -> Result<MonthlySeries> {
    <MonthlySeries>::try_from(series).map_err(|_| {
        Error::MalformedSeries(format!("expected {MONTHS} monthly values, got {}", series.len()))
    })
}

/// Mean, first-harmonic amplitude and phase, population variance and extremes.
pub fn summarize(series: &[f64]) -> Result<SeasonalSummary> {
    let series = as_monthly(series)?;
    if let Some(v) = series.iter().find(|v| !v.is_finite()) {
        return Err(Error::MalformedSeries(format!("non-finite value {v}")));
    }
    let n = MONTHS as f64;
    let min = series.iter().copied().fold(f64::INFINITY, f64::min);
    let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // summation rounding can push the mean of a flat series past its extremes
    let mean = (series.iter().sum::<f64>() / n).clamp(min, max);
    let variance = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;

    // c1 = sum x_t exp(-i w t); a cosine peaking at month m has arg(c1) = -w m,
    // so the peak angle is -arg(c1).
    let (mut re, mut im) = (0.0, 0.0);
    for (t, &x) in series.iter().enumerate() {
        let angle = TAU * t as f64 / n;
        re += x * angle.cos();
        im -= x * angle.sin();
    }
    let modulus = re.hypot(im);
    let scale = series.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let (amplitude, phase) = if modulus <= 1e-12 * scale * n {
        (0.0, 0.0)
    } else {
        let mut phase = (-im.atan2(re)).rem_euclid(TAU);
        // rounding can land a zero angle just below 2pi
        if TAU - phase < 1e-12 {
            phase = 0.0;
        }
        (2.0 * modulus / n, phase)
    };

    Ok(SeasonalSummary {
        mean,
        amplitude,
        phase,
        variance,
        min,
        max,
    })
}

/// Column names of the feature layout for a variable set.
pub fn feature_layout<S: AsRef<str>>(variables: &[S]) -> Vec<String> {
    let mut vars: Vec<&str> = variables.iter().map(|v| v.as_ref()).collect();
    vars.sort_unstable();
    vars.iter()
        .flat_map(|v| FEATURE_NAMES.iter().map(move |f| format!("{v}.{f}")))
        .collect()
}

/// Builds the feature vector for one port from already aligned series.
/// `variables` is the dataset-wide variable set; each must be present.
pub fn extract_features<S: AsRef<[f64]>>(
    port_id: &str,
    aligned: &BTreeMap<String, S>,
    variables: &[String],
) -> Result<FeatureVector> {
    let mut vars: Vec<&String> = variables.iter().collect();
    vars.sort_unstable();
    let mut values = Vec::with_capacity(vars.len() * FEATURES_PER_VARIABLE);
    for var in vars {
        let series = aligned
            .get(var)
            .ok_or_else(|| Error::MalformedSeries(format!("port {port_id}: missing variable {var}")))?;
        let summary = summarize(series.as_ref()).map_err(|e| match e {
            Error::MalformedSeries(m) => {
                Error::MalformedSeries(format!("port {port_id}, variable {var}: {m}"))
            }
            other => other,
        })?;
        values.extend(summary.to_array());
    }
    Ok(FeatureVector {
        port_id: port_id.to_string(),
        values,
    })
}

pub fn dataset_variables(records: &[PortRecord]) -> Vec<String> {
    records
        .first()
        .map(|r| r.series.keys().cloned().collect())
        .unwrap_or_default()
}

/// Aligns and summarizes every port, preserving input order.
pub fn port_features(records: &[PortRecord]) -> Result<Vec<FeatureVector>> {
    let variables = dataset_variables(records);
    records
        .par_iter()
        .map(|rec| {
            let aligned = rec
                .series
                .iter()
                .map(|(k, s)| Ok((k.clone(), align_phase(s, rec.latitude)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            extract_features(&rec.port_id, &aligned, &variables)
        })
        .collect()
}

/// Per-dimension location and scale fitted on a port population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Dimensions with zero spread; these standardize to exactly 0.
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyDataset("standardizer input"))?;
        let dim = first.len();
        for r in rows {
            if r.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: r.len(),
                });
            }
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        let mut scale = vec![1.0; dim];
        let mut constant = vec![false; dim];
        for d in 0..dim {
            let lo = rows.iter().map(|r| r[d]).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r[d]).fold(f64::NEG_INFINITY, f64::max);
            if lo == hi {
                mean[d] = lo;
                constant[d] = true;
                continue;
            }
            let m = rows.iter().map(|r| r[d]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[d] - m).powi(2)).sum::<f64>() / n;
            mean[d] = m;
            scale[d] = var.sqrt();
        }
        Ok(Self {
            mean,
            scale,
            constant,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: values.len(),
            });
        }
        Ok(values
            .iter()
            .enumerate()
            .map(|(d, &x)| {
                if self.constant[d] && x == self.mean[d] {
                    0.0
                } else {
                    (x - self.mean[d]) / self.scale[d]
                }
            })
            .collect())
    }

    pub fn transform_features(&self, features: &[FeatureVector]) -> Result<Vec<FeatureVector>> {
        features
            .iter()
            .map(|f| {
                Ok(FeatureVector {
                    port_id: f.port_id.clone(),
                    values: self.transform(&f.values)?,
                })
            })
            .collect()
    }
}

/// Z-scores every dimension with population statistics.
pub fn standardize(features: &[FeatureVector]) -> Result<(Vec<FeatureVector>, Standardizer)> {
    if features.is_empty() {
        return Err(Error::EmptyDataset("feature vectors"));
    }
    let rows: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
    let standardizer = Standardizer::fit(&rows)?;
    let out = standardizer.transform_features(features)?;
    Ok((out, standardizer))
}

pub fn env_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Deserialize)]
struct ClimateRow {
    port_id: String,
    variable: String,
    month: i64,
    value: f64,
}

/// Reads `port_id,variable,month,value` rows and joins them to the registry.
/// Every registry port must carry all 12 months of every variable.
pub fn load_climate(path: &Path, registry: &PortRegistry) -> Result<Vec<PortRecord>> {
    let mut rdr = csv_reader(path)?;
    let mut cells: BTreeMap<(String, String), [Option<f64>; MONTHS]> = BTreeMap::new();
    for (row, rec) in rdr.deserialize::<ClimateRow>().enumerate() {
        let line = row as u64 + 2;
        let rec = rec.map_err(|e| Error::from(e).at(path, line))?;
        if registry.get(&rec.port_id).is_none() {
            return Err(Error::Registry(rec.port_id).at(path, line));
        }
        if !(0..MONTHS as i64).contains(&rec.month) {
            return Err(Error::MalformedSeries(format!("month {} outside 0..11", rec.month)).at(path, line));
        }
        if !rec.value.is_finite() {
            return Err(Error::MalformedSeries("non-finite value".into()).at(path, line));
        }
        let slot = &mut cells
            .entry((rec.port_id.clone(), rec.variable.clone()))
            .or_insert([None; MONTHS])[rec.month as usize];
        if slot.is_some() {
            return Err(Error::DataIntegrity(format!(
                "duplicate value for {}/{} month {}",
                rec.port_id, rec.variable, rec.month
            ))
            .at(path, line));
        }
        *slot = Some(rec.value);
    }
    if cells.is_empty() {
        return Err(Error::EmptyDataset("climate table"));
    }

    let variables: BTreeSet<&String> = cells.keys().map(|(_, v)| v).collect();
    let mut records = Vec::with_capacity(registry.len());
    for port in registry.ports() {
        let mut series = BTreeMap::new();
        for var in &variables {
            let key = (port.port_id.clone(), (*var).clone());
            let months = cells.get(&key).ok_or_else(|| {
                Error::MalformedSeries(format!(
                    "{}: port {} has no values for variable {var}",
                    path.display(),
                    port.port_id
                ))
            })?;
            let mut values = [0.0; MONTHS];
            for (t, v) in months.iter().enumerate() {
                values[t] = v.ok_or_else(|| {
                    Error::MalformedSeries(format!(
                        "{}: port {} variable {var} missing month {t}",
                        path.display(),
                        port.port_id
                    ))
                })?;
            }
            series.insert((*var).clone(), values);
        }
        records.push(PortRecord {
            port_id: port.port_id.clone(),
            name: port.name.clone(),
            latitude: port.latitude,
            longitude: port.longitude,
            capacity: port.capacity,
            series,
        });
    }
    Ok(records)
}
