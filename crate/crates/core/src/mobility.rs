//! Monthly directed port graphs built from voyage counts, plus per-edge
//! history queries.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ais::Voyage;
use crate::error::{Error, Result};
use crate::registry::PortRegistry;

pub const DEFAULT_RECENCY_HORIZON: u32 = 24;

/// Directed voyage counts for one month. Only nonzero cells are stored and
/// the diagonal is always empty.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilitySnapshot {
    pub month_index: i64,
    pub ports: Arc<Vec<String>>,
    pub weights: BTreeMap<(usize, usize), u32>,
}

impl MobilitySnapshot {
    pub fn weight(&self, from: usize, to: usize) -> u32 {
        self.weights.get(&(from, to)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.weights.values().map(|&w| w as u64).sum()
    }
}

/// Contiguous run of monthly snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub ports: Arc<Vec<String>>,
    pub snapshots: Vec<MobilitySnapshot>,
}

impl Timeline {
    pub fn first_month(&self) -> Option<i64> {
        self.snapshots.first().map(|s| s.month_index)
    }

    pub fn last_month(&self) -> Option<i64> {
        self.snapshots.last().map(|s| s.month_index)
    }

    pub fn get(&self, month_index: i64) -> Option<&MobilitySnapshot> {
        let first = self.first_month()?;
        let offset = usize::try_from(month_index - first).ok()?;
        self.snapshots.get(offset)
    }

    /// Weight at a month, zero outside the timeline.
    pub fn weight(&self, from: usize, to: usize, month_index: i64) -> u32 {
        self.get(month_index).map_or(0, |s| s.weight(from, to))
    }

    /// Ordered pairs with a nonzero weight in any month.
    pub fn active_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = self
            .snapshots
            .iter()
            .flat_map(|s| s.weights.keys().copied())
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }

    /// Summed counts over `[start, end]` as a single snapshot stamped `end`.
    pub fn aggregate(&self, start: i64, end: i64) -> Result<MobilitySnapshot> {
        if start > end {
            return Err(Error::Range(format!("empty window {start}..={end}")));
        }
        let mut weights = BTreeMap::new();
        for s in self
            .snapshots
            .iter()
            .filter(|s| (start..=end).contains(&s.month_index))
        {
            for (&k, &w) in &s.weights {
                *weights.entry(k).or_insert(0) += w;
            }
        }
        Ok(MobilitySnapshot {
            month_index: end,
            ports: self.ports.clone(),
            weights,
        })
    }

    /// Trailing `months`-wide sums, one per month with a full window.
    pub fn rolling(&self, months: usize) -> Result<Timeline> {
        if months == 0 {
            return Err(Error::Domain("window must span at least one month".into()));
        }
        let snapshots = match (self.first_month(), self.last_month()) {
            (Some(first), Some(last)) => (first + months as i64 - 1..=last)
                .map(|t| self.aggregate(t - months as i64 + 1, t))
                .collect::<Result<_>>()?,
            _ => Vec::new(),
        };
        Ok(Timeline {
            ports: self.ports.clone(),
            snapshots,
        })
    }
}

/// Buckets voyages by arrival month. With `window` unset the timeline spans
/// the first to last arrival month; every month in range gets a snapshot.
pub fn build_snapshots(
    voyages: &[Voyage],
    registry: &PortRegistry,
    window: Option<(i64, i64)>,
) -> Result<Timeline> {
    let ports = Arc::new(registry.ids());
    let (start, end) = match window {
        Some((s, e)) if s <= e => (s, e),
        Some((s, e)) => return Err(Error::Range(format!("empty window {s}..={e}"))),
        None => {
            let lo = voyages.iter().map(|v| v.month_index).min();
            let hi = voyages.iter().map(|v| v.month_index).max();
            match lo.zip(hi) {
                Some(w) => w,
                None => {
                    return Ok(Timeline {
                        ports,
                        snapshots: Vec::new(),
                    })
                }
            }
        }
    };
    let mut snapshots: Vec<MobilitySnapshot> = (start..=end)
        .map(|m| MobilitySnapshot {
            month_index: m,
            ports: ports.clone(),
            weights: BTreeMap::new(),
        })
        .collect();
    for v in voyages {
        let i = registry.index_of(&v.origin)?;
        let j = registry.index_of(&v.destination)?;
        if i == j {
            return Err(Error::DataIntegrity(format!(
                "self-loop voyage at {} for mmsi {}",
                v.origin, v.mmsi
            )));
        }
        if !(start..=end).contains(&v.month_index) {
            return Err(Error::Range(format!(
                "voyage arriving in month {} outside window {start}..={end}",
                v.month_index
            )));
        }
        *snapshots[(v.month_index - start) as usize]
            .weights
            .entry((i, j))
            .or_insert(0) += 1;
    }
    Ok(Timeline { ports, snapshots })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeHistory {
    pub pair: (usize, usize),
    /// `[w_t, w_{t-1}, ..., w_{t-L+1}]`
    pub lags: Vec<u32>,
    /// Months back to the latest nonzero weight, capped at the horizon.
    pub recency: u32,
}

pub fn edge_history(
    timeline: &Timeline,
    pair: (usize, usize),
    t: i64,
    lags: usize,
    horizon: u32,
) -> Result<EdgeHistory> {
    let (first, last) = timeline
        .first_month()
        .zip(timeline.last_month())
        .ok_or_else(|| Error::Range("empty timeline".into()))?;
    if !(first..=last).contains(&t) {
        return Err(Error::Range(format!("month {t} outside {first}..={last}")));
    }
    if lags == 0 {
        return Err(Error::Domain("lag depth must be >= 1".into()));
    }
    let (i, j) = pair;
    let lag_values = (0..lags as i64).map(|k| timeline.weight(i, j, t - k)).collect();
    let recency = (0..horizon)
        .find(|&k| t - (k as i64) >= first && timeline.weight(i, j, t - k as i64) > 0)
        .unwrap_or(horizon);
    Ok(EdgeHistory {
        pair,
        lags: lag_values,
        recency,
    })
}
